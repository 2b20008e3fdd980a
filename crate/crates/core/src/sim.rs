//! Seeded synthetic campaigns with both counterfactual outcomes known for
//! every individual, so an Oracle exists.
//!
//! Generative story:
//!
//! * Each individual gets binary protected attributes `age`, `gender` and
//!   `income`, and a latent persuadability score
//!   `s = rho * a + sqrt(1 - rho^2) * e`, where `a` is the standardized
//!   correlated attribute and `e ~ N(0, 1)`. Hence `corr(a, s) = rho`.
//! * Quadrant counts match `quadrant_mix` exactly (largest remainder). The
//!   highest-scoring individuals become Persuadables; the rest are shuffled
//!   into Sure Things, Lost Causes and Do-not-Disturbs.
//! * Individuals live in five customer segments, each a Gaussian cluster
//!   around its own axis. Two segments mix quadrants on purpose:
//!   - *offer-responsive*: Persuadables plus Lost Causes. Treatment-response
//!     models over-rate the Lost Causes here.
//!   - *habitual*: Persuadables plus Sure Things. Control-response models
//!     over-rate the Persuadables' organic activity here.
//!
//!   The remaining segments are pure Sure Thing, Lost Cause and
//!   Do-not-Disturb. The number of Lost Causes in the offer-responsive
//!   segment equals the number of Persuadables in the habitual one whenever
//!   the population allows it.
//! * Observed outcomes flip each latent outcome independently with
//!   probability `noise_level`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{
    classify_quadrant, selection_size, CampaignError, CampaignSpec, Individual, IndividualId,
    OracleMode, Quadrant,
};
use crate::models::HistoryRecord;
use crate::rng::{derive_seed, stream_rng};

/// Protected attributes produced by the simulator, in CSV column order.
pub const PROTECTED_ATTRIBUTES: [&str; 3] = ["age", "gender", "income"];

/// Share of group 1 for each protected attribute.
const ATTRIBUTE_RATES: [f64; 3] = [0.5, 0.45, 0.5];

/// Fraction of Persuadables placed in the offer-responsive segment.
const OFFER_RESPONSIVE_SHARE: f64 = 0.6;

/// Sure Things per Persuadable in the habitual segment.
const HABITUAL_SURE_RATIO: f64 = 2.0;

const SEGMENTS: usize = 5;
const SEG_OFFER_RESPONSIVE: usize = 0;
const SEG_HABITUAL: usize = 1;
const SEG_SURE: usize = 2;
const SEG_LOST: usize = 3;
const SEG_DISTURB: usize = 4;

const HISTORY_STREAM: u64 = 0x4157;
const DRIFT_STREAM: u64 = 0xd71f;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("no latent outcomes for individual {0}")]
    MissingLatent(IndividualId),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_individuals: usize,
    pub n_features: usize,
    pub seed: u64,
    /// Target shares of SureThing, LostCause, DoNotDisturb, Persuadable.
    pub quadrant_mix: [f64; 4],
    pub noise_level: f64,
    pub drift_magnitude: f64,
    pub protected_correlation: f64,
    /// When set, rescales `quadrant_mix` so the treated-arm positive share
    /// (Sure Things plus Persuadables) equals this value.
    pub positive_rate: Option<f64>,
    /// Protected attribute that carries `protected_correlation`.
    pub correlated_attribute: String,
    /// Distance of each segment centre from the origin.
    pub cluster_separation: f64,
    /// Standard deviation of the segment-axis coordinates.
    pub cluster_spread: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_individuals: 17_000,
            n_features: 8,
            seed: 0,
            quadrant_mix: [0.15, 0.55, 0.10, 0.20],
            noise_level: 0.1,
            drift_magnitude: 0.05,
            protected_correlation: 0.3,
            positive_rate: None,
            correlated_attribute: "income".to_string(),
            cluster_separation: 3.0,
            cluster_spread: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.n_individuals == 0 {
            return bad("n_individuals must be positive".into());
        }
        if self.n_features == 0 {
            return bad("n_features must be positive".into());
        }
        if self.quadrant_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("quadrant_mix entries must be non-negative".into());
        }
        let total: f64 = self.quadrant_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("quadrant_mix sums to {total}, not 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return bad("noise_level must lie in [0, 1]".into());
        }
        if !(self.drift_magnitude >= 0.0 && self.drift_magnitude.is_finite()) {
            return bad("drift_magnitude must be finite and non-negative".into());
        }
        if !(-1.0..=1.0).contains(&self.protected_correlation) {
            return bad("protected_correlation must lie in [-1, 1]".into());
        }
        if let Some(r) = self.positive_rate {
            if !(r > 0.0 && r < 1.0) {
                return bad("positive_rate must lie in (0, 1)".into());
            }
            let [s, l, d, p] = self.quadrant_mix;
            if s + p <= 0.0 || l + d <= 0.0 {
                return bad("positive_rate needs both responders and non-responders in the mix".into());
            }
        }
        if !PROTECTED_ATTRIBUTES.contains(&self.correlated_attribute.as_str()) {
            return bad(format!("unknown protected attribute `{}`", self.correlated_attribute));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return bad("cluster_separation must be positive".into());
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return bad("cluster_spread must be positive".into());
        }
        Ok(())
    }

    /// Quadrant shares after applying `positive_rate`.
    pub fn effective_mix(&self) -> [f64; 4] {
        let [s, l, d, p] = self.quadrant_mix;
        match self.positive_rate {
            None => self.quadrant_mix,
            Some(r) => {
                let responders = s + p;
                let others = l + d;
                [s * r / responders, l * (1.0 - r) / others, d * (1.0 - r) / others, p * r / responders]
            }
        }
    }
}

/// Exact per-quadrant counts by the largest-remainder method.
pub fn quadrant_counts(n: usize, mix: [f64; 4]) -> [usize; 4] {
    let raw: Vec<f64> = mix.iter().map(|p| p * n as f64).collect();
    let mut counts: [usize; 4] = std::array::from_fn(|i| raw[i].floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// A generated population with its counterfactual truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCampaign {
    pub individuals: Vec<Individual>,
    /// `(outcome if treated, outcome if not treated)` before observation noise.
    pub latent_outcomes: BTreeMap<IndividualId, (bool, bool)>,
    pub true_quadrant: BTreeMap<IndividualId, Quadrant>,
    /// Latent outcomes after noise; these are what a campaign observes.
    pub observed_outcomes: BTreeMap<IndividualId, (bool, bool)>,
    pub persuadability: BTreeMap<IndividualId, f64>,
}

impl SyntheticCampaign {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn latent(&self, id: IndividualId) -> Result<(bool, bool), SimError> {
        self.latent_outcomes.get(&id).copied().ok_or(SimError::MissingLatent(id))
    }

    /// Sets `kpi_observed` from the observed outcome of each individual's
    /// assigned arm. Individuals without a treatment flag are left alone.
    pub fn realize_kpis(&self, population: &mut [Individual]) -> Result<(), SimError> {
        for individual in population.iter_mut() {
            if let Some(treated) = individual.treated {
                let (t, c) = self
                    .observed_outcomes
                    .get(&individual.id)
                    .copied()
                    .ok_or(SimError::MissingLatent(individual.id))?;
                let outcome = if treated { t } else { c };
                individual.kpi_observed = Some(if outcome { 1.0 } else { 0.0 });
            }
        }
        Ok(())
    }

    /// Historical observations with both arms observed, as training data.
    pub fn history_records(&self) -> Vec<HistoryRecord> {
        self.individuals
            .iter()
            .map(|ind| {
                let (t, c) = self.observed_outcomes[&ind.id];
                HistoryRecord {
                    features: ind.features_start.clone(),
                    outcome_treated: Some(t),
                    outcome_control: Some(c),
                    quadrant: Some(self.true_quadrant[&ind.id]),
                }
            })
            .collect()
    }
}

/// Axis and sign of a segment centre.
fn segment_axis(segment: usize, d: usize) -> (usize, f64) {
    let sign = if (segment / d) % 2 == 0 { 1.0 } else { -1.0 };
    (segment % d, sign)
}

/// Generates a population with `features_start` only.
pub fn generate_population(config: &SimConfig) -> Result<SyntheticCampaign, SimError> {
    config.validate()?;
    let n = config.n_individuals;
    let d = config.n_features;
    let counts = quadrant_counts(n, config.effective_mix());
    let attribute_index = PROTECTED_ATTRIBUTES
        .iter()
        .position(|a| *a == config.correlated_attribute)
        .expect("validated");

    // Protected attributes and persuadability score.
    let mut rng = stream_rng(config.seed, 1);
    let rho = config.protected_correlation;
    let residual = (1.0 - rho * rho).max(0.0).sqrt();
    let mut groups = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let g: [u8; 3] = std::array::from_fn(|k| u8::from(rng.random::<f64>() < ATTRIBUTE_RATES[k]));
        let pi = ATTRIBUTE_RATES[attribute_index];
        let a = (f64::from(g[attribute_index]) - pi) / (pi * (1.0 - pi)).sqrt();
        let e: f64 = rng.sample(StandardNormal);
        scores.push(rho * a + residual * e);
        groups.push(g);
    }

    // Quadrants: top scores are Persuadables, the rest are shuffled.
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let [n_sure, n_lost, _, n_pers] = counts;
    let mut quadrant = vec![Quadrant::LostCause; n];
    for &i in &by_score[..n_pers] {
        quadrant[i] = Quadrant::Persuadable;
    }
    let mut rest: Vec<usize> = by_score[n_pers..].to_vec();
    rest.sort_unstable();
    let mut rng = stream_rng(config.seed, 2);
    rest.shuffle(&mut rng);
    for (k, &i) in rest.iter().enumerate() {
        quadrant[i] = if k < n_sure {
            Quadrant::SureThing
        } else if k < n_sure + n_lost {
            Quadrant::LostCause
        } else {
            Quadrant::DoNotDisturb
        };
    }

    // Segments.
    let mut rng = stream_rng(config.seed, 3);
    let mut members = |q: Quadrant| -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).filter(|&i| quadrant[i] == q).collect();
        v.shuffle(&mut rng);
        v
    };
    let persuadables = members(Quadrant::Persuadable);
    let lost = members(Quadrant::LostCause);
    let sure = members(Quadrant::SureThing);
    let mut segment = vec![SEG_DISTURB; n];
    let offer_p = ((OFFER_RESPONSIVE_SHARE * n_pers as f64).round() as usize).min(n_pers);
    let habitual_p = n_pers - offer_p;
    for (k, &i) in persuadables.iter().enumerate() {
        segment[i] = if k < offer_p { SEG_OFFER_RESPONSIVE } else { SEG_HABITUAL };
    }
    let offer_l = habitual_p.min(lost.len());
    for (k, &i) in lost.iter().enumerate() {
        segment[i] = if k < offer_l { SEG_OFFER_RESPONSIVE } else { SEG_LOST };
    }
    let habitual_s = ((HABITUAL_SURE_RATIO * habitual_p as f64).round() as usize).min(sure.len());
    for (k, &i) in sure.iter().enumerate() {
        segment[i] = if k < habitual_s { SEG_HABITUAL } else { SEG_SURE };
    }

    // Features.
    let mut rng = stream_rng(config.seed, 4);
    let informative = d.min(SEGMENTS);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut x: Vec<f64> = (0..d)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    if j < informative {
                        z * config.cluster_spread
                    } else {
                        z
                    }
                })
                .collect();
            let (axis, sign) = segment_axis(segment[i], d);
            x[axis] += sign * config.cluster_separation;
            x
        })
        .collect();

    // Observation noise.
    let mut rng = stream_rng(config.seed, 5);
    let mut individuals = Vec::with_capacity(n);
    let mut latent_outcomes = BTreeMap::new();
    let mut true_quadrant = BTreeMap::new();
    let mut observed_outcomes = BTreeMap::new();
    let mut persuadability = BTreeMap::new();
    for (i, x) in features.into_iter().enumerate() {
        let id = i as IndividualId;
        let (t, c) = quadrant[i].outcomes();
        let flip_t = rng.random::<f64>() < config.noise_level;
        let flip_c = rng.random::<f64>() < config.noise_level;
        let mut individual = Individual::new(id, x);
        for (k, name) in PROTECTED_ATTRIBUTES.iter().enumerate() {
            individual.protected.insert((*name).to_string(), groups[i][k]);
        }
        individuals.push(individual);
        latent_outcomes.insert(id, (t, c));
        true_quadrant.insert(id, quadrant[i]);
        observed_outcomes.insert(id, (t ^ flip_t, c ^ flip_c));
        persuadability.insert(id, scores[i]);
    }
    Ok(SyntheticCampaign { individuals, latent_outcomes, true_quadrant, observed_outcomes, persuadability })
}

/// Populates `features_end` as `features_start + drift * N(0, 1)` per
/// coordinate.
pub fn apply_drift(campaign: &SyntheticCampaign, drift_magnitude: f64, seed: u64) -> SyntheticCampaign {
    let mut out = campaign.clone();
    let mut rng = stream_rng(seed, 6);
    for individual in out.individuals.iter_mut() {
        individual.features_end = if drift_magnitude == 0.0 {
            individual.features_start.clone()
        } else {
            individual
                .features_start
                .iter()
                .map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    v + drift_magnitude * z
                })
                .collect()
        };
    }
    out
}

/// Population plus drift as configured.
pub fn simulate(config: &SimConfig) -> Result<SyntheticCampaign, SimError> {
    let campaign = generate_population(config)?;
    Ok(apply_drift(&campaign, config.drift_magnitude, derive_seed(config.seed, DRIFT_STREAM)))
}

/// Training history: an independent population drawn from the same
/// configuration, with both arms observed.
pub fn generate_history(config: &SimConfig) -> Result<Vec<HistoryRecord>, SimError> {
    let history_config = SimConfig { seed: derive_seed(config.seed, HISTORY_STREAM), ..config.clone() };
    Ok(generate_population(&history_config)?.history_records())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Treat,
    NoTreat,
}

/// Realized profit of a treatment assignment on latent outcomes:
/// `unit_value * positive outcomes - intervention_cost * treated`.
pub fn profit<F>(campaign: &SyntheticCampaign, spec: &CampaignSpec, treated: F) -> Result<f64, SimError>
where
    F: Fn(IndividualId) -> bool,
{
    let (mut positives, mut treated_count) = (0u64, 0u64);
    for individual in &campaign.individuals {
        let (t, c) = campaign.latent(individual.id)?;
        let is_treated = treated(individual.id);
        positives += u64::from(if is_treated { t } else { c });
        treated_count += u64::from(is_treated);
    }
    // Integer counts first, so the total does not depend on summation order.
    Ok(spec.unit_value * positives as f64 - spec.intervention_cost * treated_count as f64)
}

fn gain(spec: &CampaignSpec, (t, c): (bool, bool)) -> f64 {
    spec.unit_value * (f64::from(u8::from(t)) - f64::from(u8::from(c))) - spec.intervention_cost
}

/// Oracle decisions from counterfactual outcomes and their profit.
///
/// Unbudgeted: treat exactly when treating is strictly more profitable.
/// Budgeted: treat the `selection_size(B, n)` largest gains, ties by id.
pub fn oracle_actions(
    campaign: &SyntheticCampaign,
    spec: &CampaignSpec,
) -> Result<(BTreeMap<IndividualId, Action>, f64), SimError> {
    spec.validate()?;
    let mut gains = Vec::with_capacity(campaign.len());
    for individual in &campaign.individuals {
        gains.push((individual.id, gain(spec, campaign.latent(individual.id)?)));
    }
    let mut actions = BTreeMap::new();
    match spec.oracle_mode {
        OracleMode::Unbudgeted => {
            for &(id, g) in &gains {
                actions.insert(id, if g > 0.0 { Action::Treat } else { Action::NoTreat });
            }
        }
        OracleMode::Budgeted => {
            let size = selection_size(spec.budget_fraction, gains.len())?;
            gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (k, &(id, _)) in gains.iter().enumerate() {
                actions.insert(id, if k < size { Action::Treat } else { Action::NoTreat });
            }
        }
    }
    let total = profit(campaign, spec, |id| actions[&id] == Action::Treat)?;
    Ok((actions, total))
}

/// Checks that `true_quadrant` agrees with `latent_outcomes` everywhere.
pub fn quadrants_consistent(campaign: &SyntheticCampaign) -> bool {
    campaign.latent_outcomes.len() == campaign.true_quadrant.len()
        && campaign
            .latent_outcomes
            .iter()
            .all(|(id, &(t, c))| campaign.true_quadrant.get(id) == Some(&classify_quadrant(t, c)))
}
