//! Binary group-fairness metrics.
//!
//! Group coding: `A = 1` is the group of interest ("group 1"), `A = 0` the
//! reference group ("group 2"). Difference metrics are group 1 minus group 2;
//! statistical parity and disparate impact put `A = 0` first, so
//!
//! * SP = P(Y^=1 | A=0) - P(Y^=1 | A=1)
//! * DI = P(Y^=1 | A=0) / P(Y^=1 | A=1)
//! * AO = ((FPR1 - FPR0) + (TPR1 - TPR0)) / 2
//! * EO = TPR1 - TPR0, FNRDiff = FNR1 - FNR0, PE = FPR1 - FPR0
//!
//! Each value is formed as one exact integer fraction and divided once, so
//! EO + FNRDiff is exactly zero and swapping groups exactly negates the
//! difference metrics. Undefined rates surface as typed errors, never NaN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FairnessError {
    #[error("input lengths differ: preds {preds}, labels {labels}, membership {membership}")]
    LengthMismatch { preds: usize, labels: usize, membership: usize },
    #[error("{field}[{index}] = {value} is not binary")]
    NonBinaryInput { field: &'static str, index: usize, value: u8 },
    #[error("group A={group} is empty")]
    EmptyGroup { group: u8 },
    #[error("no positive predictions in group A=1; disparate impact is undefined")]
    ZeroDenominator,
    #[error("{rate} undefined for group A={group}: no {missing} examples")]
    UndefinedRate { group: u8, rate: &'static str, missing: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    SP,
    DI,
    AO,
    EO,
    FNRDiff,
    PE,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::SP, Metric::DI, Metric::AO, Metric::EO, Metric::FNRDiff, Metric::PE];

    pub fn requires_labels(self) -> bool {
        !matches!(self, Metric::SP | Metric::DI)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::SP => "SP",
            Metric::DI => "DI",
            Metric::AO => "AO",
            Metric::EO => "EO",
            Metric::FNRDiff => "FNRDiff",
            Metric::PE => "PE",
        }
    }

    pub fn parse(text: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(text))
    }

    /// Closed interval of acceptable values.
    pub fn ideal_bounds(self) -> (f64, f64) {
        match self {
            Metric::DI => (0.8, 1.2),
            _ => (-0.2, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    WithinIdeal,
    OutsideIdeal,
    /// The metric could not be computed; see the diagnostic.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Label-free metrics only.
    Base,
    /// All six metrics, using supplied labels.
    Enhanced,
}

pub fn classify_band(metric: Metric, value: f64) -> Band {
    let (lo, hi) = metric.ideal_bounds();
    if value.is_finite() && lo <= value && value <= hi {
        Band::WithinIdeal
    } else {
        Band::OutsideIdeal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    /// `None` when the metric is undefined on this data.
    pub value: Option<f64>,
    pub band: Band,
    pub requires_labels: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl MetricResult {
    pub fn defined(metric: Metric, value: f64) -> Self {
        MetricResult {
            metric,
            value: Some(value),
            band: classify_band(metric, value),
            requires_labels: metric.requires_labels(),
            diagnostic: None,
        }
    }

    pub fn undefined(metric: Metric, error: &FairnessError) -> Self {
        MetricResult {
            metric,
            value: None,
            band: Band::Undefined,
            requires_labels: metric.requires_labels(),
            diagnostic: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub mode: Mode,
    pub results: Vec<MetricResult>,
}

impl FairnessReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricResult> {
        self.results.iter().find(|r| r.metric == metric)
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.get(metric).and_then(|r| r.value)
    }
}

/// Confusion counts for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

/// Confusion counts indexed by group code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub groups: [Counts; 2],
}

impl GroupConfusion {
    pub fn group(&self, g: u8) -> &Counts {
        &self.groups[usize::from(g)]
    }

    /// The same counts with group codes exchanged.
    pub fn swapped(&self) -> Self {
        GroupConfusion { groups: [self.groups[1], self.groups[0]] }
    }
}

fn check_binary(field: &'static str, values: &[u8]) -> Result<(), FairnessError> {
    match values.iter().position(|&v| v > 1) {
        Some(index) => Err(FairnessError::NonBinaryInput { field, index, value: values[index] }),
        None => Ok(()),
    }
}

fn check_pair(preds: &[u8], membership: &[u8]) -> Result<(), FairnessError> {
    if preds.len() != membership.len() {
        return Err(FairnessError::LengthMismatch {
            preds: preds.len(),
            labels: preds.len(),
            membership: membership.len(),
        });
    }
    check_binary("preds", preds)?;
    check_binary("membership", membership)
}

pub fn group_confusion(preds: &[u8], labels: &[u8], membership: &[u8]) -> Result<GroupConfusion, FairnessError> {
    if preds.len() != labels.len() || preds.len() != membership.len() {
        return Err(FairnessError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
            membership: membership.len(),
        });
    }
    check_binary("preds", preds)?;
    check_binary("labels", labels)?;
    check_binary("membership", membership)?;
    let mut conf = GroupConfusion::default();
    for ((&p, &y), &a) in preds.iter().zip(labels).zip(membership) {
        let c = &mut conf.groups[usize::from(a)];
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(conf)
}

fn ratio(num: i128, den: i128) -> f64 {
    num as f64 / den as f64
}

/// `(positive predictions, size)` per group.
fn prediction_rates(preds: &[u8], membership: &[u8]) -> Result<[(i128, i128); 2], FairnessError> {
    check_pair(preds, membership)?;
    let mut out = [(0i128, 0i128); 2];
    for (&p, &a) in preds.iter().zip(membership) {
        let slot = &mut out[usize::from(a)];
        slot.0 += i128::from(p);
        slot.1 += 1;
    }
    for g in 0..2u8 {
        if out[usize::from(g)].1 == 0 {
            return Err(FairnessError::EmptyGroup { group: g });
        }
    }
    Ok(out)
}

pub fn statistical_parity(preds: &[u8], membership: &[u8]) -> Result<MetricResult, FairnessError> {
    let [(pos0, n0), (pos1, n1)] = prediction_rates(preds, membership)?;
    Ok(MetricResult::defined(Metric::SP, ratio(pos0 * n1 - pos1 * n0, n0 * n1)))
}

pub fn disparate_impact(preds: &[u8], membership: &[u8]) -> Result<MetricResult, FairnessError> {
    let [(pos0, n0), (pos1, n1)] = prediction_rates(preds, membership)?;
    if pos1 == 0 {
        return Err(FairnessError::ZeroDenominator);
    }
    Ok(MetricResult::defined(Metric::DI, ratio(pos0 * n1, n0 * pos1)))
}

fn positives(conf: &GroupConfusion, rate: &'static str) -> Result<[i128; 2], FairnessError> {
    let mut out = [0i128; 2];
    for g in 0..2u8 {
        let p = conf.group(g).positives();
        if p == 0 {
            return Err(FairnessError::UndefinedRate { group: g, rate, missing: "positive" });
        }
        out[usize::from(g)] = i128::from(p);
    }
    Ok(out)
}

fn negatives(conf: &GroupConfusion, rate: &'static str) -> Result<[i128; 2], FairnessError> {
    let mut out = [0i128; 2];
    for g in 0..2u8 {
        let n = conf.group(g).negatives();
        if n == 0 {
            return Err(FairnessError::UndefinedRate { group: g, rate, missing: "negative" });
        }
        out[usize::from(g)] = i128::from(n);
    }
    Ok(out)
}

/// Numerator of TPR1 - TPR0 over the denominator `P1 * P0`.
fn tpr_gap(conf: &GroupConfusion) -> Result<(i128, i128), FairnessError> {
    let [p0, p1] = positives(conf, "TPR")?;
    let tp0 = i128::from(conf.groups[0].tp);
    let tp1 = i128::from(conf.groups[1].tp);
    Ok((tp1 * p0 - tp0 * p1, p1 * p0))
}

/// Numerator of FPR1 - FPR0 over the denominator `N1 * N0`.
fn fpr_gap(conf: &GroupConfusion) -> Result<(i128, i128), FairnessError> {
    let [n0, n1] = negatives(conf, "FPR")?;
    let fp0 = i128::from(conf.groups[0].fp);
    let fp1 = i128::from(conf.groups[1].fp);
    Ok((fp1 * n0 - fp0 * n1, n1 * n0))
}

pub fn average_odds(conf: &GroupConfusion) -> Result<MetricResult, FairnessError> {
    let (fpr_num, fpr_den) = fpr_gap(conf)?;
    let (tpr_num, tpr_den) = tpr_gap(conf)?;
    let num = fpr_num * tpr_den + tpr_num * fpr_den;
    Ok(MetricResult::defined(Metric::AO, ratio(num, 2 * fpr_den * tpr_den)))
}

pub fn equal_opportunity(conf: &GroupConfusion) -> Result<MetricResult, FairnessError> {
    let (num, den) = tpr_gap(conf)?;
    Ok(MetricResult::defined(Metric::EO, ratio(num, den)))
}

pub fn fnr_difference(conf: &GroupConfusion) -> Result<MetricResult, FairnessError> {
    let [p0, p1] = positives(conf, "FNR")?;
    let fn0 = i128::from(conf.groups[0].fn_);
    let fn1 = i128::from(conf.groups[1].fn_);
    Ok(MetricResult::defined(Metric::FNRDiff, ratio(fn1 * p0 - fn0 * p1, p1 * p0)))
}

pub fn predictive_equality(conf: &GroupConfusion) -> Result<MetricResult, FairnessError> {
    let (num, den) = fpr_gap(conf)?;
    Ok(MetricResult::defined(Metric::PE, ratio(num, den)))
}

/// Base report without labels, enhanced report with them. Input shape
/// errors fail the whole call; an undefined metric only marks its own entry.
pub fn evaluate_all(
    attribute: &str,
    preds: &[u8],
    labels: Option<&[u8]>,
    membership: &[u8],
) -> Result<FairnessReport, FairnessError> {
    check_pair(preds, membership)?;
    let conf = match labels {
        Some(labels) => Some(group_confusion(preds, labels, membership)?),
        None => None,
    };
    let mut results = Vec::with_capacity(6);
    let mut push = |metric: Metric, outcome: Result<MetricResult, FairnessError>| {
        results.push(outcome.unwrap_or_else(|e| MetricResult::undefined(metric, &e)));
    };
    push(Metric::SP, statistical_parity(preds, membership));
    push(Metric::DI, disparate_impact(preds, membership));
    if let Some(conf) = &conf {
        push(Metric::AO, average_odds(conf));
        push(Metric::EO, equal_opportunity(conf));
        push(Metric::FNRDiff, fnr_difference(conf));
        push(Metric::PE, predictive_equality(conf));
    }
    Ok(FairnessReport {
        attribute: attribute.to_string(),
        mode: if conf.is_some() { Mode::Enhanced } else { Mode::Base },
        results,
    })
}
