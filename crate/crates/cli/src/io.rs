//! CSV and JSON file formats, with atomic writes.
//!
//! Population CSV: `id,treated,kpi,<protected...>,start_f0..,end_f0..`.
//! `treated` and `kpi` are empty until the campaign has run; protected
//! columns are binary group codes; the `end_` block may be absent.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use sgt_core::models::HistoryRecord;
use sgt_core::{Individual, IndividualId, Quadrant, SyntheticCampaign};

use crate::CliError;

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn row_error(path: &Path, line: u64, message: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {message}", path.display()))
}

fn missing_column(path: &Path, column: &str) -> CliError {
    CliError::Data(format!("{}: missing column `{column}`", path.display()))
}

fn bool_cell(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.trim() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn parse_f64(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Data(format!("csv encoding failed: {e}"));
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.write_record(&row).map_err(fail)?;
    }
    writer.into_inner().map_err(|e| CliError::Data(format!("csv encoding failed: {e}")))
}

pub fn population_csv(population: &[Individual]) -> Result<Vec<u8>, CliError> {
    let attributes: Vec<String> = population
        .first()
        .map(|i| i.protected.keys().cloned().collect())
        .unwrap_or_default();
    let d = population.first().map_or(0, |i| i.features_start.len());
    let has_end = population.iter().any(|i| !i.features_end.is_empty());
    let mut header: Vec<String> = vec!["id".into(), "treated".into(), "kpi".into()];
    header.extend(attributes.iter().cloned());
    header.extend((0..d).map(|k| format!("start_f{k}")));
    if has_end {
        header.extend((0..d).map(|k| format!("end_f{k}")));
    }
    let rows = population.iter().map(|ind| {
        let mut row = vec![
            ind.id.to_string(),
            ind.treated.map(|t| bool_cell(t).to_string()).unwrap_or_default(),
            ind.kpi_observed.map(|k| k.to_string()).unwrap_or_default(),
        ];
        row.extend(attributes.iter().map(|a| ind.protected.get(a).copied().unwrap_or(0).to_string()));
        row.extend(ind.features_start.iter().map(f64::to_string));
        if has_end {
            row.extend(ind.features_end.iter().map(f64::to_string));
        }
        row
    });
    csv_bytes(&header, rows)
}

pub fn read_population(path: &Path) -> Result<Vec<Individual>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    for (i, required) in ["id", "treated", "kpi"].iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(*required) {
            return Err(missing_column(path, required));
        }
    }
    let start: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("start_")).collect();
    let end: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("end_")).collect();
    if start.is_empty() {
        return Err(missing_column(path, "start_f0"));
    }
    if !end.is_empty() && end.len() != start.len() {
        return Err(CliError::Data(format!(
            "{}: {} start features but {} end features",
            path.display(),
            start.len(),
            end.len()
        )));
    }
    let protected: Vec<usize> = (3..start[0]).collect();
    let mut population = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let id: IndividualId = cell(0).trim().parse().map_err(|_| row_error(path, line, "invalid id"))?;
        let features = |cols: &[usize]| -> Result<Vec<f64>, CliError> {
            cols.iter()
                .map(|&i| parse_f64(cell(i)).ok_or_else(|| row_error(path, line, format!("invalid `{}`", header[i]))))
                .collect()
        };
        let mut ind = Individual::new(id, features(&start)?);
        ind.features_end = features(&end)?;
        ind.treated = match cell(1).trim() {
            "" => None,
            t => Some(parse_bool(t).ok_or_else(|| row_error(path, line, "invalid `treated`"))?),
        };
        ind.kpi_observed = match cell(2).trim() {
            "" => None,
            t => Some(parse_f64(t).ok_or_else(|| row_error(path, line, "invalid `kpi`"))?),
        };
        for &i in &protected {
            let group = match cell(i).trim() {
                "0" => 0,
                "1" => 1,
                _ => return Err(row_error(path, line, format!("`{}` must be 0 or 1", header[i]))),
            };
            ind.protected.insert(header[i].clone(), group);
        }
        population.push(ind);
    }
    sgt_core::campaign::validate_population(&population).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(population)
}

pub fn history_csv(history: &[HistoryRecord]) -> Result<Vec<u8>, CliError> {
    let d = history.first().map_or(0, |r| r.features.len());
    let mut header: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    header.extend(["outcome_treated", "outcome_control", "quadrant"].map(String::from));
    let opt = |v: Option<bool>| v.map(|b| bool_cell(b).to_string()).unwrap_or_default();
    let rows = history.iter().map(|r| {
        let mut row: Vec<String> = r.features.iter().map(f64::to_string).collect();
        row.push(opt(r.outcome_treated));
        row.push(opt(r.outcome_control));
        row.push(r.quadrant.map(|q| q.name().to_string()).unwrap_or_default());
        row
    });
    csv_bytes(&header, rows)
}

fn parse_quadrant(text: &str) -> Option<Quadrant> {
    Quadrant::ALL.into_iter().find(|q| q.name() == text.trim())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let find = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| missing_column(path, name));
    let (treated, control) = (find("outcome_treated")?, find("outcome_control")?);
    let quadrant = header.iter().position(|h| h == "quadrant");
    let features: Vec<usize> = (0..header.len())
        .filter(|&i| header[i].starts_with('f') && header[i][1..].parse::<usize>().is_ok())
        .collect();
    if features.is_empty() {
        return Err(missing_column(path, "f0"));
    }
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let outcome = |i: usize| -> Result<Option<bool>, CliError> {
            match cell(i).trim() {
                "" => Ok(None),
                t => parse_bool(t).map(Some).ok_or_else(|| row_error(path, line, format!("invalid `{}`", header[i]))),
            }
        };
        let x = features
            .iter()
            .map(|&i| parse_f64(cell(i)).ok_or_else(|| row_error(path, line, format!("invalid `{}`", header[i]))))
            .collect::<Result<Vec<f64>, _>>()?;
        let quadrant = match quadrant.map(|i| cell(i).trim()) {
            None | Some("") => None,
            Some(t) => Some(parse_quadrant(t).ok_or_else(|| row_error(path, line, "invalid `quadrant`"))?),
        };
        out.push(HistoryRecord {
            features: x,
            outcome_treated: outcome(treated)?,
            outcome_control: outcome(control)?,
            quadrant,
        });
    }
    Ok(out)
}

/// Counterfactual outcomes of a simulated population.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub latent: (bool, bool),
    pub observed: (bool, bool),
    pub quadrant: Quadrant,
}

pub fn outcomes_csv(campaign: &SyntheticCampaign) -> Result<Vec<u8>, CliError> {
    let header = ["id", "latent_treated", "latent_control", "observed_treated", "observed_control", "quadrant"]
        .map(String::from);
    let rows = campaign.individuals.iter().map(|ind| {
        let (lt, lc) = campaign.latent_outcomes[&ind.id];
        let (ot, oc) = campaign.observed_outcomes[&ind.id];
        vec![
            ind.id.to_string(),
            bool_cell(lt).into(),
            bool_cell(lc).into(),
            bool_cell(ot).into(),
            bool_cell(oc).into(),
            campaign.true_quadrant[&ind.id].name().into(),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn read_outcomes(path: &Path) -> Result<BTreeMap<IndividualId, OutcomeRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let names = ["id", "latent_treated", "latent_control", "observed_treated", "observed_control", "quadrant"];
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(names) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| missing_column(path, name))?;
    }
    let mut out = BTreeMap::new();
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |i: usize| record.get(cols[i]).unwrap_or("");
        let flag = |i: usize| parse_bool(cell(i)).ok_or_else(|| row_error(path, line, format!("invalid `{}`", names[i])));
        let id: IndividualId = cell(0).trim().parse().map_err(|_| row_error(path, line, "invalid id"))?;
        let row = OutcomeRow {
            latent: (flag(1)?, flag(2)?),
            observed: (flag(3)?, flag(4)?),
            quadrant: parse_quadrant(cell(5)).ok_or_else(|| row_error(path, line, "invalid `quadrant`"))?,
        };
        if out.insert(id, row).is_some() {
            return Err(row_error(path, line, format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

/// A binary column keyed by id.
pub struct BinaryColumn {
    pub name: String,
    pub values: BTreeMap<IndividualId, u8>,
}

/// Reads binary columns from an `id,...` CSV. With `wanted` empty, every
/// non-id column is returned.
pub fn read_binary_columns(path: &Path, wanted: &[String]) -> Result<Vec<BinaryColumn>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let id_col = header.iter().position(|h| h == "id").ok_or_else(|| missing_column(path, "id"))?;
    let selected: Vec<usize> = if wanted.is_empty() {
        (0..header.len()).filter(|&i| i != id_col).collect()
    } else {
        wanted
            .iter()
            .map(|w| header.iter().position(|h| h == w).ok_or_else(|| missing_column(path, w)))
            .collect::<Result<_, _>>()?
    };
    let mut columns: Vec<BinaryColumn> =
        selected.iter().map(|&i| BinaryColumn { name: header[i].clone(), values: BTreeMap::new() }).collect();
    for (k, record) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let id: IndividualId =
            record.get(id_col).unwrap_or("").trim().parse().map_err(|_| row_error(path, line, "invalid id"))?;
        for (column, &i) in columns.iter_mut().zip(&selected) {
            let value = match parse_bool(record.get(i).unwrap_or("")) {
                Some(b) => u8::from(b),
                None => return Err(row_error(path, line, format!("`{}` must be 0 or 1", header[i]))),
            };
            if column.values.insert(id, value).is_some() {
                return Err(row_error(path, line, format!("duplicate id {id}")));
            }
        }
    }
    Ok(columns)
}

fn read_header(path: &Path) -> Result<Vec<String>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    Ok(reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect())
}

/// Picks `explicit`, else the first of `preferred` present in the file,
/// else its only non-id column.
pub fn pick_column(path: &Path, explicit: Option<&str>, preferred: &[&str]) -> Result<BinaryColumn, CliError> {
    let name = match explicit {
        Some(name) => name.to_string(),
        None => {
            let header = read_header(path)?;
            let values: Vec<&String> = header.iter().filter(|h| *h != "id").collect();
            match preferred.iter().find(|p| header.iter().any(|h| h == *p)) {
                Some(p) => p.to_string(),
                None if values.len() == 1 => values[0].clone(),
                None => {
                    return Err(CliError::Data(format!(
                        "{}: cannot choose a column; expected one of {preferred:?} or a single value column",
                        path.display()
                    )))
                }
            }
        }
    };
    Ok(read_binary_columns(path, &[name])?.remove(0))
}
