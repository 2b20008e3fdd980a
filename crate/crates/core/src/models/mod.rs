//! Response classifiers and the three uplift scoring strategies:
//! two-model, dummy treatment indicator, and four-quadrant classification.

mod logistic;
mod oversample;
mod uplift;

use thiserror::Error;

pub use logistic::{sigmoid, train_logistic, Classifier, TrainConfig, TrainingMeta, PROBA_EPS};
pub use oversample::{oversample_minority, oversample_with_jitter, DEFAULT_JITTER};
pub use uplift::{
    train_four_quadrant, train_uplift, uplift_dummy, uplift_four_quadrant, uplift_two_model,
    ArmModel, DummyArm, HistoryRecord, LiftScore, QuadrantArm, QuadrantClassifier, UpliftModel,
    UpliftStrategy,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("only one label class present")]
    DegenerateLabels,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("training features must be finite")]
    NonFiniteFeature,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// One labelled training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: bool) -> Self {
        Sample { features, label }
    }
}
