//! Campaign domain model: population members, campaign parameters, lift
//! rankings, budgeted selection and the four response quadrants.
//!
//! Everything here is immutable once built and every operation is a pure
//! function, so campaigns can be evaluated concurrently without coordination.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a population member.
pub type IndividualId = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CampaignError {
    #[error("score for individual {id} is not finite ({value})")]
    NonFiniteScore { id: IndividualId, value: f64 },
    #[error("cannot rank an empty score set")]
    EmptyScores,
    #[error("population is empty")]
    EmptyPopulation,
    #[error("budget fraction {0} is outside (0, 1]")]
    InvalidBudget(f64),
    #[error("ranking covers {ranked} ids but population size is {expected}")]
    RankingSizeMismatch { ranked: usize, expected: usize },
    #[error("duplicate individual id {0}")]
    DuplicateId(IndividualId),
    #[error("individual {id}: start features have {start} dims, end features have {end}")]
    FeatureDimMismatch { id: IndividualId, start: usize, end: usize },
    #[error("individual {id}: protected attribute `{attribute}` has non-binary value {value}")]
    NonBinaryProtected { id: IndividualId, attribute: String, value: u8 },
    #[error("invalid campaign spec: {0}")]
    InvalidSpec(String),
}

/// One population member.
///
/// `features_end` is empty until the state at the end of the campaign
/// window has been observed. `treated` is `None` before Step I has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    pub features_start: Vec<f64>,
    pub features_end: Vec<f64>,
    /// Protected attribute name to binary group code.
    pub protected: BTreeMap<String, u8>,
    /// Observed KPI over the campaign window; `None` until observed.
    pub kpi_observed: Option<f64>,
    pub treated: Option<bool>,
}

impl Individual {
    pub fn new(id: IndividualId, features_start: Vec<f64>) -> Self {
        Individual {
            id,
            features_start,
            features_end: Vec::new(),
            protected: BTreeMap::new(),
            kpi_observed: None,
            treated: None,
        }
    }

    pub fn with_protected(mut self, attribute: impl Into<String>, group: u8) -> Self {
        self.protected.insert(attribute.into(), group);
        self
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if !self.features_end.is_empty() && self.features_end.len() != self.features_start.len() {
            return Err(CampaignError::FeatureDimMismatch {
                id: self.id,
                start: self.features_start.len(),
                end: self.features_end.len(),
            });
        }
        for (attribute, &value) in &self.protected {
            if value > 1 {
                return Err(CampaignError::NonBinaryProtected {
                    id: self.id,
                    attribute: attribute.clone(),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Checks per-member invariants and id uniqueness across a population.
pub fn validate_population(population: &[Individual]) -> Result<(), CampaignError> {
    let mut seen = HashSet::with_capacity(population.len());
    for individual in population {
        individual.validate()?;
        if !seen.insert(individual.id) {
            return Err(CampaignError::DuplicateId(individual.id));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiKind {
    BinaryProfitability,
    ContinuousProfit,
}

/// Whether the Oracle strategy respects the campaign budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Best action per individual, no cap on the number treated.
    #[default]
    Unbudgeted,
    /// Best `selection_size(B, n)` individuals by counterfactual gain.
    Budgeted,
}

/// Campaign parameters: budget, KPI kind, window and per-treatment cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Fraction of the population that may be treated, in (0, 1].
    pub budget_fraction: f64,
    pub kpi_kind: KpiKind,
    pub t_start: i64,
    pub t_end: i64,
    /// Cost charged per treated individual.
    pub intervention_cost: f64,
    /// Value of one positive binary outcome.
    pub unit_value: f64,
    #[serde(default)]
    pub oracle_mode: OracleMode,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            budget_fraction: 0.10,
            kpi_kind: KpiKind::BinaryProfitability,
            t_start: 0,
            t_end: 30,
            intervention_cost: 0.1,
            unit_value: 1.0,
            oracle_mode: OracleMode::Unbudgeted,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(CampaignError::InvalidBudget(self.budget_fraction));
        }
        if self.t_start >= self.t_end {
            return Err(CampaignError::InvalidSpec(format!(
                "t_start {} must precede t_end {}",
                self.t_start, self.t_end
            )));
        }
        if !(self.intervention_cost >= 0.0 && self.intervention_cost.is_finite()) {
            return Err(CampaignError::InvalidSpec(format!(
                "intervention cost {} must be finite and non-negative",
                self.intervention_cost
            )));
        }
        if !self.unit_value.is_finite() {
            return Err(CampaignError::InvalidSpec("unit value must be finite".into()));
        }
        Ok(())
    }

    pub fn with_budget(&self, budget_fraction: f64) -> Self {
        CampaignSpec { budget_fraction, ..self.clone() }
    }
}

/// Individuals ordered by descending score, ties by ascending id, with the
/// budget cut point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRanking {
    pub ordered_ids: Vec<IndividualId>,
    pub scores: Vec<f64>,
    pub cut: usize,
}

impl LiftRanking {
    pub fn len(&self) -> usize {
        self.ordered_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered_ids.is_empty()
    }

    /// Ids above the cut.
    pub fn selected(&self) -> &[IndividualId] {
        &self.ordered_ids[..self.cut]
    }

    pub fn unselected(&self) -> &[IndividualId] {
        &self.ordered_ids[self.cut..]
    }

    pub fn with_cut(mut self, cut: usize) -> Self {
        self.cut = cut.min(self.ordered_ids.len());
        self
    }
}

/// Orders by score descending with ties broken by ascending id.
fn ranking_order(a: &(IndividualId, f64), b: &(IndividualId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Sorts `(id, score)` pairs into a deterministic ranking with cut 0.
pub fn rank_by_score<I>(scores: I) -> Result<LiftRanking, CampaignError>
where
    I: IntoIterator<Item = (IndividualId, f64)>,
{
    let mut pairs: Vec<(IndividualId, f64)> = scores.into_iter().collect();
    if pairs.is_empty() {
        return Err(CampaignError::EmptyScores);
    }
    if let Some(&(id, value)) = pairs.iter().find(|(_, s)| !s.is_finite()) {
        return Err(CampaignError::NonFiniteScore { id, value });
    }
    // -0.0 and 0.0 must tie; total_cmp alone would split them.
    for pair in pairs.iter_mut() {
        if pair.1 == 0.0 {
            pair.1 = 0.0;
        }
    }
    pairs.sort_unstable_by(ranking_order);
    let (ordered_ids, scores) = pairs.into_iter().unzip();
    Ok(LiftRanking { ordered_ids, scores, cut: 0 })
}

/// Number of individuals a budget fraction buys: `floor(B * n)`, at least 1.
///
/// A relative slack of 1e-9 keeps products such as `0.29 * 100` from
/// flooring one short.
pub fn selection_size(budget_fraction: f64, n: usize) -> Result<usize, CampaignError> {
    if n == 0 {
        return Err(CampaignError::EmptyPopulation);
    }
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(CampaignError::InvalidBudget(budget_fraction));
    }
    let raw = budget_fraction * n as f64;
    let size = (raw + raw.abs() * 1e-9).floor() as usize;
    Ok(size.clamp(1, n))
}

/// Budgeted selection from a ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub intervention: Vec<IndividualId>,
    pub complement: Vec<IndividualId>,
    pub ranking: LiftRanking,
}

/// Splits a ranking into the top `selection_size(B, n)` ids and the rest.
pub fn select_top_k(
    ranking: LiftRanking,
    budget_fraction: f64,
    n: usize,
) -> Result<TopK, CampaignError> {
    let size = selection_size(budget_fraction, n)?;
    if ranking.len() != n {
        return Err(CampaignError::RankingSizeMismatch { ranked: ranking.len(), expected: n });
    }
    let ranking = ranking.with_cut(size);
    Ok(TopK {
        intervention: ranking.selected().to_vec(),
        complement: ranking.unselected().to_vec(),
        ranking,
    })
}

/// Response segment of an individual with respect to an intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    /// Responds with or without the intervention.
    SureThing,
    /// Never responds.
    LostCause,
    /// Responds only when left alone.
    DoNotDisturb,
    /// Responds only when treated.
    Persuadable,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::SureThing,
        Quadrant::LostCause,
        Quadrant::DoNotDisturb,
        Quadrant::Persuadable,
    ];

    pub fn index(self) -> usize {
        match self {
            Quadrant::SureThing => 0,
            Quadrant::LostCause => 1,
            Quadrant::DoNotDisturb => 2,
            Quadrant::Persuadable => 3,
        }
    }

    /// `(outcome if treated, outcome if not treated)`.
    pub fn outcomes(self) -> (bool, bool) {
        match self {
            Quadrant::SureThing => (true, true),
            Quadrant::LostCause => (false, false),
            Quadrant::DoNotDisturb => (false, true),
            Quadrant::Persuadable => (true, false),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quadrant::SureThing => "sure_thing",
            Quadrant::LostCause => "lost_cause",
            Quadrant::DoNotDisturb => "do_not_disturb",
            Quadrant::Persuadable => "persuadable",
        }
    }
}

pub fn classify_quadrant(outcome_treated: bool, outcome_control: bool) -> Quadrant {
    match (outcome_treated, outcome_control) {
        (true, true) => Quadrant::SureThing,
        (false, false) => Quadrant::LostCause,
        (false, true) => Quadrant::DoNotDisturb,
        (true, false) => Quadrant::Persuadable,
    }
}
