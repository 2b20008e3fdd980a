//! `uplift-sgt` command-line front end: simulate campaigns, ingest event
//! logs, train uplift models, derive SGT labels, evaluate fairness and run
//! the strategy-comparison suite.
//!
//! Exit codes: 0 success, 1 usage error (synopsis on stderr), 2 data error.
//! Reports go to stdout, diagnostics to stderr; for fixed inputs and seed
//! stdout is byte-identical across runs. Files are written atomically.

pub mod ingest;
pub mod io;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use sgt_core::harness::{CampaignConfig, FlatRow};
use sgt_core::sgt::{step_one, step_two_with_size};
use sgt_core::sim::{generate_history, quadrant_counts, simulate, PROTECTED_ATTRIBUTES};
use sgt_core::{
    evaluate_all, run_suite, CampaignSpec, Quadrant, SimConfig, SuiteConfig, SuiteReport, UpliftModel,
    UpliftStrategy,
};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "UPLIFT_SGT_SEED";

pub const SYNOPSIS: &str = "\
usage: uplift-sgt <command> [options]

commands:
  simulate  --out-dir DIR [--n N] [--features D] [--seed S] [--noise P] [--drift M] [--mix S,L,D,P]
  ingest    --events CSV --profiles CSV --portfolio CSV --out CSV [--age-threshold X] [--income-threshold X]
  train     --history CSV --out JSON [--strategy two_model|dummy|four_quadrant] [--seed S]
  sgt       --population CSV --models JSON [--budget B] [--outcomes CSV] [--out CSV]
  fairness  --preds CSV --membership CSV [--labels CSV]
  suite     [--seed S] [--budgets B,..] [--campaigns K] [--n N] [--out JSON] [--csv CSV]
  report    --input JSON [--format table|csv]
";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "uplift-sgt", version, about = "Surrogate ground truth labels and fairness for uplift campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic population, its training history and outcomes.
    Simulate(SimulateArgs),
    /// Turn an event log into per-customer monthly treatment/control records.
    Ingest(IngestArgs),
    /// Train an uplift model on a history CSV.
    Train(TrainArgs),
    /// Run Steps I and II and emit surrogate labels.
    Sgt(SgtArgs),
    /// Evaluate binary fairness metrics.
    Fairness(FairnessArgs),
    /// Run the strategy comparison over seeded campaigns and budgets.
    Suite(SuiteArgs),
    /// Render a suite report as CSV or a text table.
    Report(ReportArgs),
}

fn budget(text: &str) -> Result<f64, String> {
    let b: f64 = text.trim().parse().map_err(|_| format!("`{text}` is not a number"))?;
    if b > 0.0 && b <= 1.0 {
        Ok(b)
    } else {
        Err(format!("budget {b} must lie in (0, 1]"))
    }
}

fn strategy(text: &str) -> Result<UpliftStrategy, String> {
    UpliftStrategy::parse(text).ok_or_else(|| format!("unknown strategy `{text}`"))
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 17_000)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    features: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.05)]
    drift: f64,
    /// Sure Thing, Lost Cause, Do-not-Disturb, Persuadable shares.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    mix: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.3)]
    protected_correlation: f64,
    #[arg(long)]
    positive_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    portfolio: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Age at or above which `age = 1`; defaults to the median.
    #[arg(long)]
    age_threshold: Option<f64>,
    /// Income at or above which `income = 1`; defaults to the median.
    #[arg(long)]
    income_threshold: Option<f64>,
    #[arg(long, default_value_t = 1)]
    validation_months: usize,
    #[arg(long, default_value_t = 1)]
    test_months: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "two_model", value_parser = strategy)]
    strategy: UpliftStrategy,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct SgtArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value = "0.1", value_parser = budget)]
    budget: f64,
    /// Outcomes CSV used to observe KPIs when the population has not run.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FairnessArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    membership: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    preds_column: Option<String>,
    #[arg(long)]
    labels_column: Option<String>,
    /// Restrict to these membership columns.
    #[arg(long)]
    attribute: Vec<String>,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15,0.20", value_parser = budget)]
    budgets: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    campaigns: usize,
    #[arg(long, default_value_t = 17_000)]
    n: usize,
    #[arg(long, default_value = "two_model", value_parser = strategy)]
    strategy: UpliftStrategy,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

/// Runs the CLI on `argv` (including the program name).
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let _ = write!(stderr, "{}\n{SYNOPSIS}", e.render());
            return 1;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, CliError::Usage(_)) {
                let _ = write!(stderr, "{SYNOPSIS}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Ingest(a) => cmd_ingest(a, stdout, stderr),
        Command::Train(a) => cmd_train(a, stdout),
        Command::Sgt(a) => cmd_sgt(a, stdout),
        Command::Fairness(a) => cmd_fairness(a, stdout),
        Command::Suite(a) => cmd_suite(a, stdout),
        Command::Report(a) => cmd_report(a, stdout),
    }
}

/// `--seed`, else `UPLIFT_SGT_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{text}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn emit(stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    stdout.write_all(bytes).map_err(|e| CliError::Data(format!("stdout: {e}")))
}

fn emit_json(stdout: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    emit(stdout, text.as_bytes())
}

fn cmd_simulate(a: SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed)?;
    let mut config = SimConfig {
        n_individuals: a.n,
        n_features: a.features,
        seed,
        noise_level: a.noise,
        drift_magnitude: a.drift,
        protected_correlation: a.protected_correlation,
        positive_rate: a.positive_rate,
        ..SimConfig::default()
    };
    if let Some(mix) = a.mix {
        config.quadrant_mix = [mix[0], mix[1], mix[2], mix[3]];
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let campaign = simulate(&config).map_err(data)?;
    let history = generate_history(&config).map_err(data)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", a.out_dir.display())))?;
    let files = [
        ("population.csv", io::population_csv(&campaign.individuals)?),
        ("history.csv", io::history_csv(&history)?),
        ("outcomes.csv", io::outcomes_csv(&campaign)?),
    ];
    for (name, bytes) in &files {
        io::write_atomic(&a.out_dir.join(name), bytes)?;
    }
    let counts = quadrant_counts(config.n_individuals, config.effective_mix());
    let quadrants: BTreeMap<&str, usize> = Quadrant::ALL.iter().map(|q| (q.name(), counts[q.index()])).collect();
    emit_json(
        stdout,
        &json!({
            "command": "simulate",
            "seed": seed,
            "n_individuals": config.n_individuals,
            "n_features": config.n_features,
            "protected_attributes": PROTECTED_ATTRIBUTES,
            "quadrant_counts": quadrants,
            "files": files.iter().map(|(name, _)| *name).collect::<Vec<_>>(),
        }),
    )
}

fn cmd_ingest(a: IngestArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let config = ingest::IngestConfig {
        age_threshold: a.age_threshold,
        income_threshold: a.income_threshold,
        validation_months: a.validation_months,
        test_months: a.test_months,
    };
    let result = ingest::ingest(&a.events, &a.profiles, &a.portfolio, &config)?;
    for row in &result.summary.malformed_rows {
        let _ = writeln!(stderr, "warning: skipped malformed {} row at line {}: {}", row.file, row.line, row.reason);
    }
    io::write_atomic(&a.out, &ingest::records_csv(&result.records)?)?;
    emit_json(stdout, &result.summary)
}

fn cmd_train(a: TrainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed)?;
    let mut cfg = CampaignConfig::seeded(seed).train;
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = a.l2 {
        cfg.l2 = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let history = io::read_history(&a.history)?;
    let model = sgt_core::models::train_uplift(a.strategy, &history, &cfg).map_err(data)?;
    let mut text = serde_json::to_string_pretty(&model.to_json_value()).map_err(data)?;
    text.push('\n');
    io::write_atomic(&a.out, text.as_bytes())?;
    emit_json(
        stdout,
        &json!({
            "command": "train",
            "seed": seed,
            "strategy": a.strategy.name(),
            "rows": history.len(),
            "feature_dim": model.feature_dim(),
        }),
    )
}

pub fn load_model(path: &Path) -> Result<UpliftModel, CliError> {
    let text = io::read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    UpliftModel::from_json_value(&value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_sgt(a: SgtArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut population = io::read_population(&a.population)?;
    let model = load_model(&a.models)?;
    if let Some(first) = population.first() {
        if first.features_start.len() != model.feature_dim() {
            return Err(CliError::Data(format!(
                "population has {} features but the model expects {}",
                first.features_start.len(),
                model.feature_dim()
            )));
        }
    }
    let launched = !population.is_empty() && population.iter().all(|i| i.treated.is_some() && i.kpi_observed.is_some());
    let size = if launched {
        population.iter().filter(|i| i.treated == Some(true)).count()
    } else {
        let Some(path) = &a.outcomes else {
            return Err(CliError::Data(
                "population has no observed campaign; pass --outcomes to observe KPIs".into(),
            ));
        };
        let outcomes = io::read_outcomes(path)?;
        let spec = CampaignSpec::default().with_budget(a.budget);
        let selection = step_one(&population, &model, &spec).map_err(data)?;
        selection.launch(&mut population);
        for ind in population.iter_mut() {
            let row = outcomes.get(&ind.id).ok_or_else(|| CliError::Data(format!("no outcomes for id {}", ind.id)))?;
            let outcome = if ind.treated == Some(true) { row.observed.0 } else { row.observed.1 };
            ind.kpi_observed = Some(if outcome { 1.0 } else { 0.0 });
        }
        selection.size
    };
    let (m_t, m_c) = (model.treatment_arm(), model.control_arm());
    let labels = step_two_with_size(&population, size, m_t.as_ref(), m_c.as_ref()).map_err(data)?;
    let mut ordered: Vec<&sgt_core::Individual> = population.iter().collect();
    ordered.sort_by_key(|i| i.id);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| CliError::Data(format!("csv encoding failed: {e}"));
    writer.write_record(["id", "surrogate_lift", "sgt_label", "treated_in_campaign"]).map_err(encode)?;
    for ind in ordered {
        let label = labels.label(ind.id) == Some(true);
        writer
            .write_record([
                ind.id.to_string(),
                labels.surrogate_lift[&ind.id].to_string(),
                u8::from(label).to_string(),
                u8::from(ind.treated == Some(true)).to_string(),
            ])
            .map_err(encode)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Data(format!("csv encoding failed: {e}")))?;
    match &a.out {
        Some(path) => {
            io::write_atomic(path, &bytes)?;
            emit_json(
                stdout,
                &json!({"command": "sgt", "population": population.len(), "selection_size": size}),
            )
        }
        None => emit(stdout, &bytes),
    }
}

fn cmd_fairness(a: FairnessArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let preds = io::pick_column(&a.preds, a.preds_column.as_deref(), &["pred", "treated_in_campaign", "treated"])?;
    let labels = match &a.labels {
        Some(path) => Some(io::pick_column(path, a.labels_column.as_deref(), &["label", "sgt_label"])?),
        None => None,
    };
    let membership = io::read_binary_columns(&a.membership, &a.attribute)?;
    if membership.is_empty() {
        return Err(CliError::Data(format!("{}: no attribute columns", a.membership.display())));
    }
    let ids: Vec<u64> = membership[0].values.keys().copied().collect();
    let align = |column: &io::BinaryColumn, what: &str| -> Result<Vec<u8>, CliError> {
        if column.values.len() != ids.len() {
            return Err(CliError::Data(format!(
                "{what} has {} ids but membership has {}",
                column.values.len(),
                ids.len()
            )));
        }
        ids.iter()
            .map(|id| column.values.get(id).copied().ok_or_else(|| CliError::Data(format!("{what} lacks id {id}"))))
            .collect()
    };
    let p = align(&preds, "preds")?;
    let y = labels.as_ref().map(|l| align(l, "labels")).transpose()?;
    let mut reports = Vec::new();
    for column in &membership {
        let a_col = align(column, &column.name)?;
        reports.push(evaluate_all(&column.name, &p, y.as_deref(), &a_col).map_err(data)?);
    }
    emit_json(stdout, &reports)
}

fn cmd_suite(a: SuiteArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed)?;
    if a.campaigns == 0 {
        return Err(CliError::Usage("--campaigns must be positive".into()));
    }
    let mut config = SuiteConfig::standard(seed, a.campaigns, a.budgets).with_population(a.n);
    for c in config.campaigns.iter_mut() {
        c.strategy = a.strategy;
        c.sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let report = run_suite(&config).map_err(data)?;
    let mut text = report.to_json();
    text.push('\n');
    if let Some(path) = &a.out {
        io::write_atomic(path, text.as_bytes())?;
    }
    if let Some(path) = &a.csv {
        io::write_atomic(path, &flat_csv(&report.flat_rows())?)?;
    }
    emit(stdout, text.as_bytes())
}

pub fn flat_csv(rows: &[FlatRow]) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| CliError::Data(format!("csv encoding failed: {e}"));
    writer
        .write_record([
            "campaign",
            "seed",
            "budget",
            "attribute",
            "metric",
            "value",
            "band",
            "requires_labels",
            "imp",
            "profit_uplift",
            "profit_sgt",
            "profit_oracle",
        ])
        .map_err(encode)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let band = serde_json::to_value(r.band).map_err(data)?;
        writer
            .write_record([
                r.campaign.to_string(),
                r.seed.to_string(),
                r.budget.to_string(),
                r.attribute.clone(),
                r.metric.name().to_string(),
                opt(r.value),
                band.as_str().unwrap_or_default().to_string(),
                r.requires_labels.to_string(),
                opt(r.imp),
                r.profit_uplift.to_string(),
                r.profit_sgt.to_string(),
                r.profit_oracle.to_string(),
            ])
            .map_err(encode)?;
    }
    writer.into_inner().map_err(|e| CliError::Data(format!("csv encoding failed: {e}")))
}

fn summary_table(report: &SuiteReport) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}%"));
    let mut out = format!("{:<8} {:>7} {:>9} {:>9} {:>9}\n", "budget", "defined", "max", "min", "mean");
    for s in &report.summary {
        out.push_str(&format!(
            "{:<8} {:>7} {:>9} {:>9} {:>9}\n",
            format!("{:.0}%", s.budget * 100.0),
            s.defined,
            fmt(s.max),
            fmt(s.min),
            fmt(s.mean)
        ));
    }
    out.push_str(&format!(
        "\n{:<9} {:<8} {:>10} {:>10} {:>10} {:>9}\n",
        "campaign", "budget", "uplift", "sgt", "oracle", "imp"
    ));
    for cell in &report.cells {
        match &cell.gap {
            Some(g) => out.push_str(&format!(
                "{:<9} {:<8} {:>10.1} {:>10.1} {:>10.1} {:>9}\n",
                cell.campaign,
                format!("{:.0}%", cell.budget * 100.0),
                g.profit_uplift,
                g.profit_sgt,
                g.profit_oracle,
                fmt(g.imp)
            )),
            None => out.push_str(&format!(
                "{:<9} {:<8} error: {}\n",
                cell.campaign,
                format!("{:.0}%", cell.budget * 100.0),
                cell.error.as_deref().unwrap_or("unknown")
            )),
        }
    }
    out
}

fn cmd_report(a: ReportArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = io::read_text(&a.input)?;
    let report: SuiteReport =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    match a.format {
        ReportFormat::Csv => emit(stdout, &flat_csv(&report.flat_rows())?),
        ReportFormat::Table => emit(stdout, summary_table(&report).as_bytes()),
    }
}
