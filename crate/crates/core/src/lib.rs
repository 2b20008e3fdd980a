//! Surrogate ground truth (SGT) generation for budgeted uplift campaigns,
//! together with binary group-fairness evaluation, a synthetic campaign
//! simulator with known counterfactuals, and an evaluation harness that
//! compares campaign strategies against an Oracle.
//!
//! The typical flow is:
//!
//! 1. [`sim::simulate`] a population (or load one),
//! 2. train an [`models::UpliftModel`] on historical observations,
//! 3. [`sgt::step_one`] to rank by lift and select the budgeted campaign,
//! 4. observe KPIs, then [`sgt::step_two`] to re-score every individual with
//!    the complementary model and emit surrogate labels,
//! 5. feed the labels to [`fairness::evaluate_all`] to unlock the
//!    label-dependent metrics.

pub mod campaign;
pub mod fairness;
pub mod harness;
pub mod models;
pub mod rng;
pub mod sgt;
pub mod sim;

pub use campaign::{
    classify_quadrant, rank_by_score, select_top_k, selection_size, CampaignError, CampaignSpec,
    Individual, IndividualId, KpiKind, LiftRanking, OracleMode, Quadrant,
};
pub use fairness::{evaluate_all, Band, FairnessReport, Metric, MetricResult, Mode};
pub use harness::{gap_closed, run_suite, GapReport, Strategy, SuiteConfig, SuiteReport};
pub use models::{Classifier, TrainConfig, UpliftModel, UpliftStrategy};
pub use sgt::{step_one, step_two, CampaignSelection, SgtLabels};
pub use sim::{SimConfig, SyntheticCampaign};
