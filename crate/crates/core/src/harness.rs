//! Strategy comparison on simulated campaigns: profits of No Offer, Full
//! Offer, Oracle, Uplift and SGT selections, the share of the Oracle gap
//! closed by SGT, and base versus enhanced fairness of the Uplift decisions
//! judged against SGT labels.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{CampaignSpec, Individual, IndividualId, OracleMode};
use crate::fairness::{evaluate_all, Band, FairnessError, FairnessReport, Metric, Mode};
use crate::models::{train_uplift, ModelError, TrainConfig, UpliftModel, UpliftStrategy};
use crate::rng::derive_seed;
use crate::sgt::{step_one, step_two_model, CampaignSelection, SgtError, SgtLabels};
use crate::sim::{generate_history, oracle_actions, profit, simulate, Action, SimConfig, SimError, SyntheticCampaign};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sgt(#[from] SgtError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("oracle profit {oracle} does not exceed uplift profit {uplift}; gap closed is undefined")]
    DegenerateGap { uplift: f64, oracle: f64 },
    #[error("no counterfactual outcomes for individual {0}")]
    MissingCounterfactuals(IndividualId),
    #[error("strategy {0} needs {1}")]
    MissingModels(&'static str, &'static str),
    #[error("suite needs at least one campaign and one budget")]
    EmptySuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoOffer,
    FullOffer,
    Oracle,
    Uplift,
    Sgt,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::NoOffer, Strategy::FullOffer, Strategy::Oracle, Strategy::Uplift, Strategy::Sgt];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoOffer => "no_offer",
            Strategy::FullOffer => "full_offer",
            Strategy::Oracle => "oracle",
            Strategy::Uplift => "uplift",
            Strategy::Sgt => "sgt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub actions: BTreeMap<IndividualId, Action>,
    pub profit: f64,
}

impl StrategyOutcome {
    pub fn treated_count(&self) -> usize {
        self.actions.values().filter(|a| **a == Action::Treat).count()
    }
}

/// Step I and Step II outputs a strategy may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct StrategyInputs<'a> {
    pub selection: Option<&'a CampaignSelection>,
    pub labels: Option<&'a SgtLabels>,
}

/// Realized profit of `strategy` on the campaign's latent outcomes.
pub fn evaluate_strategy(
    strategy: Strategy,
    campaign: &SyntheticCampaign,
    spec: &CampaignSpec,
    inputs: StrategyInputs<'_>,
) -> Result<StrategyOutcome, HarnessError> {
    for individual in &campaign.individuals {
        if !campaign.latent_outcomes.contains_key(&individual.id) {
            return Err(HarnessError::MissingCounterfactuals(individual.id));
        }
    }
    let treated: BTreeSet<IndividualId> = match strategy {
        Strategy::NoOffer => BTreeSet::new(),
        Strategy::FullOffer => campaign.individuals.iter().map(|i| i.id).collect(),
        Strategy::Oracle => {
            let (actions, total) = oracle_actions(campaign, spec)?;
            return Ok(StrategyOutcome { strategy, actions, profit: total });
        }
        Strategy::Uplift => inputs
            .selection
            .ok_or(HarnessError::MissingModels("uplift", "a Step I selection"))?
            .intervention
            .iter()
            .copied()
            .collect(),
        Strategy::Sgt => inputs
            .labels
            .ok_or(HarnessError::MissingModels("sgt", "Step II labels"))?
            .surrogate_treat
            .clone(),
    };
    let total = profit(campaign, spec, |id| treated.contains(&id))?;
    let actions = campaign
        .individuals
        .iter()
        .map(|i| (i.id, if treated.contains(&i.id) { Action::Treat } else { Action::NoTreat }))
        .collect();
    Ok(StrategyOutcome { strategy, actions, profit: total })
}

/// Percentage of the Oracle-minus-Uplift profit gap recovered by SGT.
pub fn gap_closed(profit_uplift: f64, profit_sgt: f64, profit_oracle: f64) -> Result<f64, HarnessError> {
    if !(profit_oracle > profit_uplift) {
        return Err(HarnessError::DegenerateGap { uplift: profit_uplift, oracle: profit_oracle });
    }
    Ok(100.0 * ((profit_sgt - profit_uplift) / (profit_oracle - profit_uplift)))
}

/// Profits of every strategy for one campaign and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub profit_no_offer: f64,
    pub profit_full_offer: f64,
    /// Oracle without a budget cap.
    pub profit_oracle: f64,
    /// Oracle restricted to the campaign's selection size.
    pub profit_oracle_budgeted: f64,
    pub profit_uplift: f64,
    pub profit_sgt: f64,
    /// Gap closed against the unbudgeted Oracle; `None` when degenerate.
    pub imp: Option<f64>,
    /// Gap closed against the budgeted Oracle; `None` when degenerate.
    pub imp_budgeted: Option<f64>,
}

impl GapReport {
    pub fn compute(
        campaign: &SyntheticCampaign,
        spec: &CampaignSpec,
        selection: &CampaignSelection,
        labels: &SgtLabels,
    ) -> Result<Self, HarnessError> {
        let inputs = StrategyInputs { selection: Some(selection), labels: Some(labels) };
        let run = |s: Strategy, spec: &CampaignSpec| evaluate_strategy(s, campaign, spec, inputs).map(|o| o.profit);
        let free = CampaignSpec { oracle_mode: OracleMode::Unbudgeted, ..spec.clone() };
        let capped = CampaignSpec { oracle_mode: OracleMode::Budgeted, ..spec.clone() };
        let profit_uplift = run(Strategy::Uplift, spec)?;
        let profit_sgt = run(Strategy::Sgt, spec)?;
        let profit_oracle = run(Strategy::Oracle, &free)?;
        let profit_oracle_budgeted = run(Strategy::Oracle, &capped)?;
        Ok(GapReport {
            profit_no_offer: run(Strategy::NoOffer, spec)?,
            profit_full_offer: run(Strategy::FullOffer, spec)?,
            profit_oracle,
            profit_oracle_budgeted,
            profit_uplift,
            profit_sgt,
            imp: gap_closed(profit_uplift, profit_sgt, profit_oracle).ok(),
            imp_budgeted: gap_closed(profit_uplift, profit_sgt, profit_oracle_budgeted).ok(),
        })
    }
}

/// Everything needed to simulate and model one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub sim: SimConfig,
    pub spec: CampaignSpec,
    pub train: TrainConfig,
    pub strategy: UpliftStrategy,
}

impl CampaignConfig {
    /// Default configuration with all seeds derived from `seed`.
    pub fn seeded(seed: u64) -> Self {
        CampaignConfig {
            sim: SimConfig { seed, ..SimConfig::default() },
            spec: CampaignSpec::default(),
            train: TrainConfig { seed: derive_seed(seed, 0x7a1), ..TrainConfig::default() },
            strategy: UpliftStrategy::TwoModel,
        }
    }
}

/// A simulated campaign with its trained uplift model.
#[derive(Debug, Clone)]
pub struct PreparedCampaign {
    pub campaign: SyntheticCampaign,
    pub model: UpliftModel,
}

/// Simulates the population and trains the model on an independent history.
pub fn prepare_campaign(config: &CampaignConfig) -> Result<PreparedCampaign, HarnessError> {
    let campaign = simulate(&config.sim)?;
    let history = generate_history(&config.sim)?;
    let model = train_uplift(config.strategy, &history, &config.train)?;
    Ok(PreparedCampaign { campaign, model })
}

/// Outcome of running Steps I and II at one budget.
#[derive(Debug, Clone)]
pub struct BudgetRun {
    /// Population with treatment flags and observed KPIs.
    pub population: Vec<Individual>,
    pub selection: CampaignSelection,
    pub labels: SgtLabels,
    pub gap: GapReport,
    pub fairness: Vec<FairnessReport>,
}

/// Launches the campaign at `spec.budget_fraction`, observes KPIs, derives
/// SGT labels and evaluates profits and fairness.
pub fn run_budget(prepared: &PreparedCampaign, spec: &CampaignSpec) -> Result<BudgetRun, HarnessError> {
    let campaign = &prepared.campaign;
    let mut population = campaign.individuals.clone();
    let selection = step_one(&population, &prepared.model, spec)?;
    selection.launch(&mut population);
    campaign.realize_kpis(&mut population)?;
    let labels = step_two_model(&population, &selection, &prepared.model)?;
    let gap = GapReport::compute(campaign, spec, &selection, &labels)?;
    let fairness = uplift_fairness(&population, &labels)?;
    Ok(BudgetRun { population, selection, labels, gap, fairness })
}

/// Base and enhanced fairness of the campaign decisions against SGT
/// labels, for every protected attribute present on the population.
pub fn uplift_fairness(population: &[Individual], labels: &SgtLabels) -> Result<Vec<FairnessReport>, HarnessError> {
    let attributes: BTreeSet<&String> = population.iter().flat_map(|i| i.protected.keys()).collect();
    let preds: Vec<u8> = population.iter().map(|i| u8::from(i.treated == Some(true))).collect();
    let truth: Vec<u8> = population.iter().map(|i| u8::from(labels.label(i.id) == Some(true))).collect();
    let mut reports = Vec::with_capacity(attributes.len() * 2);
    for attribute in attributes {
        let membership: Vec<u8> =
            population.iter().map(|i| i.protected.get(attribute).copied().unwrap_or(0)).collect();
        reports.push(evaluate_all(attribute, &preds, None, &membership)?);
        reports.push(evaluate_all(attribute, &preds, Some(&truth), &membership)?);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub campaigns: Vec<CampaignConfig>,
    pub budgets: Vec<f64>,
}

impl SuiteConfig {
    /// `n_campaigns` default campaigns with seeds derived from `seed`.
    pub fn standard(seed: u64, n_campaigns: usize, budgets: Vec<f64>) -> Self {
        SuiteConfig {
            campaigns: (0..n_campaigns as u64).map(|k| CampaignConfig::seeded(derive_seed(seed, k))).collect(),
            budgets,
        }
    }

    pub fn with_population(mut self, n: usize) -> Self {
        for c in self.campaigns.iter_mut() {
            c.sim.n_individuals = n;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub campaign: usize,
    pub seed: u64,
    pub budget: f64,
    pub selection_size: Option<usize>,
    pub gap: Option<GapReport>,
    pub fairness: Vec<FairnessReport>,
    pub error: Option<String>,
}

/// Max, min and mean gap closed across campaigns at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: f64,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    /// Campaigns whose gap closed was defined.
    pub defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub budgets: Vec<f64>,
    pub campaigns: usize,
    pub cells: Vec<CellReport>,
    pub summary: Vec<BudgetSummary>,
}

/// One line of the flat export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub campaign: usize,
    pub seed: u64,
    pub budget: f64,
    pub attribute: String,
    pub metric: Metric,
    pub value: Option<f64>,
    pub band: Band,
    pub requires_labels: bool,
    pub imp: Option<f64>,
    pub profit_uplift: f64,
    pub profit_sgt: f64,
    pub profit_oracle: f64,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite report serializes")
    }

    pub fn cell(&self, campaign: usize, budget: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.campaign == campaign && c.budget == budget)
    }

    /// One row per campaign, budget, attribute and metric, from the enhanced
    /// reports. Cells that failed contribute no rows.
    pub fn flat_rows(&self) -> Vec<FlatRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            let Some(gap) = &cell.gap else { continue };
            for report in cell.fairness.iter().filter(|r| r.mode == Mode::Enhanced) {
                for result in &report.results {
                    rows.push(FlatRow {
                        campaign: cell.campaign,
                        seed: cell.seed,
                        budget: cell.budget,
                        attribute: report.attribute.clone(),
                        metric: result.metric,
                        value: result.value,
                        band: result.band,
                        requires_labels: result.requires_labels,
                        imp: gap.imp,
                        profit_uplift: gap.profit_uplift,
                        profit_sgt: gap.profit_sgt,
                        profit_oracle: gap.profit_oracle,
                    });
                }
            }
        }
        rows
    }
}

fn run_campaign(index: usize, config: &CampaignConfig, budgets: &[f64]) -> Vec<CellReport> {
    let failed = |budget: f64, e: &HarnessError| CellReport {
        campaign: index,
        seed: config.sim.seed,
        budget,
        selection_size: None,
        gap: None,
        fairness: Vec::new(),
        error: Some(e.to_string()),
    };
    let prepared = match prepare_campaign(config) {
        Ok(p) => p,
        Err(e) => return budgets.iter().map(|&b| failed(b, &e)).collect(),
    };
    budgets
        .iter()
        .map(|&budget| match run_budget(&prepared, &config.spec.with_budget(budget)) {
            Ok(run) => CellReport {
                campaign: index,
                seed: config.sim.seed,
                budget,
                selection_size: Some(run.selection.size),
                gap: Some(run.gap),
                fairness: run.fairness,
                error: None,
            },
            Err(e) => failed(budget, &e),
        })
        .collect()
}

fn summarize(budgets: &[f64], cells: &[CellReport]) -> Vec<BudgetSummary> {
    budgets
        .iter()
        .map(|&budget| {
            let imps: Vec<f64> = cells
                .iter()
                .filter(|c| c.budget == budget)
                .filter_map(|c| c.gap.as_ref().and_then(|g| g.imp))
                .collect();
            let defined = imps.len();
            let (max, min, mean) = if imps.is_empty() {
                (None, None, None)
            } else {
                (
                    Some(imps.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                    Some(imps.iter().copied().fold(f64::INFINITY, f64::min)),
                    Some(imps.iter().sum::<f64>() / defined as f64),
                )
            };
            BudgetSummary { budget, max, min, mean, defined }
        })
        .collect()
}

/// Runs every campaign at every budget. Campaigns run in parallel; the
/// report is ordered by campaign, then budget, so output is deterministic.
/// Failures are recorded per cell.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport, HarnessError> {
    if config.campaigns.is_empty() || config.budgets.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let cells: Vec<CellReport> = config
        .campaigns
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_campaign(i, c, &config.budgets))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(&config.budgets, &cells);
    Ok(SuiteReport { budgets: config.budgets.clone(), campaigns: config.campaigns.len(), cells, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_closed_examples() {
        assert!((gap_closed(6847.0, 7778.0, 7942.0).unwrap() - 85.0).abs() <= 0.5);
        assert!((gap_closed(8697.0, 9077.0, 11126.0).unwrap() - 16.0).abs() <= 0.5);
        assert_eq!(gap_closed(10.0, 20.0, 20.0).unwrap(), 100.0);
        assert!(matches!(gap_closed(5.0, 6.0, 5.0), Err(HarnessError::DegenerateGap { .. })));
        assert!(matches!(gap_closed(5.0, 6.0, 4.0), Err(HarnessError::DegenerateGap { .. })));
    }

    #[test]
    fn gap_closed_is_affine_invariant() {
        let base = gap_closed(3.0, 7.0, 11.0).unwrap();
        for (scale, shift) in [(2.0, 0.0), (0.5, -100.0), (1000.0, 42.0)] {
            let t = |v: f64| scale * v + shift;
            let moved = gap_closed(t(3.0), t(7.0), t(11.0)).unwrap();
            assert!((moved - base).abs() < 1e-9);
        }
    }

    #[test]
    fn strategies_need_their_inputs() {
        let campaign = simulate(&SimConfig { n_individuals: 50, ..SimConfig::default() }).unwrap();
        let spec = CampaignSpec::default();
        let none = StrategyInputs::default();
        assert!(matches!(
            evaluate_strategy(Strategy::Uplift, &campaign, &spec, none),
            Err(HarnessError::MissingModels(..))
        ));
        assert!(matches!(
            evaluate_strategy(Strategy::Sgt, &campaign, &spec, none),
            Err(HarnessError::MissingModels(..))
        ));
        let mut stripped = campaign.clone();
        stripped.latent_outcomes.remove(&3);
        assert_eq!(
            evaluate_strategy(Strategy::Oracle, &stripped, &spec, none),
            Err(HarnessError::MissingCounterfactuals(3))
        );
    }

    #[test]
    fn no_offer_and_full_offer() {
        let mut campaign = simulate(&SimConfig { n_individuals: 40, ..SimConfig::default() }).unwrap();
        for v in campaign.latent_outcomes.values_mut() {
            v.1 = false;
        }
        let spec = CampaignSpec::default();
        let none = StrategyInputs::default();
        let no_offer = evaluate_strategy(Strategy::NoOffer, &campaign, &spec, none).unwrap();
        assert_eq!(no_offer.profit, 0.0);
        assert_eq!(no_offer.treated_count(), 0);
        // Cost above every possible lift: treating everyone cannot beat no one.
        for v in campaign.latent_outcomes.values_mut() {
            *v = (v.0, v.0);
        }
        let costly = CampaignSpec { intervention_cost: 1.5, ..spec };
        let full = evaluate_strategy(Strategy::FullOffer, &campaign, &costly, none).unwrap();
        let none_profit = evaluate_strategy(Strategy::NoOffer, &campaign, &costly, none).unwrap().profit;
        assert_eq!(full.treated_count(), 40);
        assert!(full.profit <= none_profit);
    }

    #[test]
    fn empty_suite_rejected() {
        assert_eq!(run_suite(&SuiteConfig { campaigns: vec![], budgets: vec![0.1] }), Err(HarnessError::EmptySuite));
        let one = SuiteConfig::standard(1, 1, vec![]);
        assert_eq!(run_suite(&one), Err(HarnessError::EmptySuite));
    }

    #[test]
    fn small_suite_shape() {
        let config = SuiteConfig::standard(3, 2, vec![0.05, 0.1]).with_population(600);
        let report = run_suite(&config).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.summary.len(), 2);
        for cell in &report.cells {
            assert!(cell.error.is_none(), "{:?}", cell.error);
            assert_eq!(cell.fairness.len(), 6);
        }
        let rows = report.flat_rows();
        assert_eq!(rows.len(), 4 * 3 * 6);
    }
}
