//! Uplift scoring strategies and the arm-level view used by re-scoring.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::logistic::{train_logistic, Classifier, TrainConfig};
use super::{ModelError, Sample};
use crate::campaign::Quadrant;
use crate::rng::derive_seed;

/// Estimated incremental response probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LiftScore(pub f64);

impl LiftScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A response probability estimate for one arm.
pub trait ArmModel: Sync {
    fn feature_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<f64, ModelError>;
}

impl ArmModel for Classifier {
    fn feature_dim(&self) -> usize {
        Classifier::feature_dim(self)
    }

    fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.predict_proba(x)
    }
}

impl<T: ArmModel + ?Sized> ArmModel for &T {
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }

    fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        (**self).predict(x)
    }
}

/// One arm of a dummy-indicator model: the indicator is fixed and appended.
#[derive(Debug, Clone, Copy)]
pub struct DummyArm<'a> {
    pub model: &'a Classifier,
    pub indicator: f64,
}

impl ArmModel for DummyArm<'_> {
    fn feature_dim(&self) -> usize {
        self.model.feature_dim() - 1
    }

    fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        let expected = self.feature_dim();
        if x.len() != expected {
            return Err(ModelError::DimensionMismatch { expected, got: x.len() });
        }
        let mut extended = Vec::with_capacity(x.len() + 1);
        extended.extend_from_slice(x);
        extended.push(self.indicator);
        self.model.predict_proba(&extended)
    }
}

/// Two-model lift: `p_T(x) - p_C(x')`.
pub fn uplift_two_model(
    m_t: &Classifier,
    m_c: &Classifier,
    x: &[f64],
    x_prime: &[f64],
) -> Result<LiftScore, ModelError> {
    Ok(LiftScore(m_t.predict_proba(x)? - m_c.predict_proba(x_prime)?))
}

/// Dummy-indicator lift: `p(x, D=1) - p(x, D=0)`.
pub fn uplift_dummy(m: &Classifier, x: &[f64]) -> Result<LiftScore, ModelError> {
    let treated = DummyArm { model: m, indicator: 1.0 }.predict(x)?;
    let control = DummyArm { model: m, indicator: 0.0 }.predict(x)?;
    Ok(LiftScore(treated - control))
}

/// One-vs-rest logistic classifiers over the four quadrants, indexed by
/// [`Quadrant::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantClassifier {
    pub models: [Classifier; 4],
}

impl QuadrantClassifier {
    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim()
    }

    /// Class probabilities renormalized to sum to one.
    pub fn predict_distribution(&self, x: &[f64]) -> Result<[f64; 4], ModelError> {
        let mut p = [0.0; 4];
        for (slot, model) in p.iter_mut().zip(&self.models) {
            *slot = model.predict_proba(x)?;
        }
        let total: f64 = p.iter().sum();
        for slot in p.iter_mut() {
            *slot /= total;
        }
        Ok(p)
    }
}

/// Four-quadrant score: renormalized probability of being a Persuadable.
pub fn uplift_four_quadrant(m4: &QuadrantClassifier, x: &[f64]) -> Result<LiftScore, ModelError> {
    Ok(LiftScore(m4.predict_distribution(x)?[Quadrant::Persuadable.index()]))
}

/// Arm probability implied by a quadrant distribution.
#[derive(Debug, Clone, Copy)]
pub struct QuadrantArm<'a> {
    pub model: &'a QuadrantClassifier,
    pub treated: bool,
}

impl ArmModel for QuadrantArm<'_> {
    fn feature_dim(&self) -> usize {
        self.model.feature_dim()
    }

    fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        let p = self.model.predict_distribution(x)?;
        let other = if self.treated { Quadrant::Persuadable } else { Quadrant::DoNotDisturb };
        Ok(p[Quadrant::SureThing.index()] + p[other.index()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpliftStrategy {
    TwoModel,
    Dummy,
    FourQuadrant,
}

impl UpliftStrategy {
    pub fn name(self) -> &'static str {
        match self {
            UpliftStrategy::TwoModel => "two_model",
            UpliftStrategy::Dummy => "dummy",
            UpliftStrategy::FourQuadrant => "four_quadrant",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.replace('-', "_").as_str() {
            "two_model" => Some(UpliftStrategy::TwoModel),
            "dummy" => Some(UpliftStrategy::Dummy),
            "four_quadrant" => Some(UpliftStrategy::FourQuadrant),
            _ => None,
        }
    }
}

/// Trained uplift model for one of the three strategies.
#[derive(Debug, Clone, PartialEq)]
pub enum UpliftModel {
    TwoModel { treatment: Classifier, control: Classifier },
    Dummy(Classifier),
    FourQuadrant(QuadrantClassifier),
}

impl UpliftModel {
    pub fn strategy(&self) -> UpliftStrategy {
        match self {
            UpliftModel::TwoModel { .. } => UpliftStrategy::TwoModel,
            UpliftModel::Dummy(_) => UpliftStrategy::Dummy,
            UpliftModel::FourQuadrant(_) => UpliftStrategy::FourQuadrant,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.treatment_arm().feature_dim()
    }

    /// Lift score on a single feature vector (`x = x'` for two-model).
    pub fn lift(&self, x: &[f64]) -> Result<LiftScore, ModelError> {
        match self {
            UpliftModel::TwoModel { treatment, control } => uplift_two_model(treatment, control, x, x),
            UpliftModel::Dummy(m) => uplift_dummy(m, x),
            UpliftModel::FourQuadrant(m4) => uplift_four_quadrant(m4, x),
        }
    }

    pub fn treatment_arm(&self) -> Box<dyn ArmModel + '_> {
        match self {
            UpliftModel::TwoModel { treatment, .. } => Box::new(treatment),
            UpliftModel::Dummy(m) => Box::new(DummyArm { model: m, indicator: 1.0 }),
            UpliftModel::FourQuadrant(m4) => Box::new(QuadrantArm { model: m4, treated: true }),
        }
    }

    pub fn control_arm(&self) -> Box<dyn ArmModel + '_> {
        match self {
            UpliftModel::TwoModel { control, .. } => Box::new(control),
            UpliftModel::Dummy(m) => Box::new(DummyArm { model: m, indicator: 0.0 }),
            UpliftModel::FourQuadrant(m4) => Box::new(QuadrantArm { model: m4, treated: false }),
        }
    }

    /// `{"strategy": ..., "models": {...}}` with each classifier in the flat
    /// logistic model format.
    pub fn to_json_value(&self) -> Value {
        match self {
            UpliftModel::TwoModel { treatment, control } => json!({
                "strategy": "two_model",
                "models": {"treatment": treatment.to_value(), "control": control.to_value()},
            }),
            UpliftModel::Dummy(m) => json!({
                "strategy": "dummy",
                "models": {"response": m.to_value()},
            }),
            UpliftModel::FourQuadrant(m4) => {
                let mut models = serde_json::Map::new();
                for q in Quadrant::ALL {
                    models.insert(q.name().to_string(), m4.models[q.index()].to_value());
                }
                json!({"strategy": "four_quadrant", "models": models})
            }
        }
    }

    pub fn from_json_value(value: &Value) -> Result<Self, ModelError> {
        let invalid = |msg: &str| ModelError::InvalidModel(msg.to_string());
        let strategy = value
            .get("strategy")
            .and_then(Value::as_str)
            .and_then(UpliftStrategy::parse)
            .ok_or_else(|| invalid("missing or unknown `strategy`"))?;
        let models = value.get("models").ok_or_else(|| invalid("missing `models`"))?;
        let get = |key: &str| -> Result<Classifier, ModelError> {
            let v = models.get(key).ok_or_else(|| invalid(&format!("missing model `{key}`")))?;
            Classifier::from_value(v.clone())
        };
        let model = match strategy {
            UpliftStrategy::TwoModel => {
                UpliftModel::TwoModel { treatment: get("treatment")?, control: get("control")? }
            }
            UpliftStrategy::Dummy => UpliftModel::Dummy(get("response")?),
            UpliftStrategy::FourQuadrant => UpliftModel::FourQuadrant(QuadrantClassifier {
                models: [
                    get(Quadrant::SureThing.name())?,
                    get(Quadrant::LostCause.name())?,
                    get(Quadrant::DoNotDisturb.name())?,
                    get(Quadrant::Persuadable.name())?,
                ],
            }),
        };
        model.check_dims()?;
        Ok(model)
    }

    fn check_dims(&self) -> Result<(), ModelError> {
        let dims: Vec<usize> = match self {
            UpliftModel::TwoModel { treatment, control } => {
                vec![treatment.feature_dim(), control.feature_dim()]
            }
            UpliftModel::Dummy(m) => {
                if m.feature_dim() == 0 {
                    return Err(ModelError::InvalidModel("dummy model lacks the indicator".into()));
                }
                vec![m.feature_dim()]
            }
            UpliftModel::FourQuadrant(m4) => m4.models.iter().map(Classifier::feature_dim).collect(),
        };
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(ModelError::DimensionMismatch { expected: dims[0], got: dims[1] });
        }
        Ok(())
    }
}

/// One historical observation. Arms that were not observed are `None`;
/// `quadrant` is only known for synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub features: Vec<f64>,
    pub outcome_treated: Option<bool>,
    pub outcome_control: Option<bool>,
    pub quadrant: Option<Quadrant>,
}

/// Trains the requested uplift strategy on historical records.
pub fn train_uplift(
    strategy: UpliftStrategy,
    history: &[HistoryRecord],
    cfg: &TrainConfig,
) -> Result<UpliftModel, ModelError> {
    match strategy {
        UpliftStrategy::TwoModel => {
            let arm = |pick: fn(&HistoryRecord) -> Option<bool>| -> Vec<Sample> {
                history
                    .iter()
                    .filter_map(|r| pick(r).map(|y| Sample::new(r.features.clone(), y)))
                    .collect()
            };
            let treated_rows = arm(|r| r.outcome_treated);
            let control_rows = arm(|r| r.outcome_control);
            let cfg_t = TrainConfig { seed: derive_seed(cfg.seed, 1), ..cfg.clone() };
            let cfg_c = TrainConfig { seed: derive_seed(cfg.seed, 2), ..cfg.clone() };
            let (treatment, control) = rayon::join(
                || train_logistic(&treated_rows, &cfg_t),
                || train_logistic(&control_rows, &cfg_c),
            );
            Ok(UpliftModel::TwoModel { treatment: treatment?, control: control? })
        }
        UpliftStrategy::Dummy => {
            let mut rows = Vec::with_capacity(history.len() * 2);
            for r in history {
                for (indicator, outcome) in [(1.0, r.outcome_treated), (0.0, r.outcome_control)] {
                    if let Some(y) = outcome {
                        let mut x = r.features.clone();
                        x.push(indicator);
                        rows.push(Sample::new(x, y));
                    }
                }
            }
            Ok(UpliftModel::Dummy(train_logistic(&rows, cfg)?))
        }
        UpliftStrategy::FourQuadrant => {
            let labelled: Vec<(Vec<f64>, Quadrant)> = history
                .iter()
                .filter_map(|r| r.quadrant.map(|q| (r.features.clone(), q)))
                .collect();
            Ok(UpliftModel::FourQuadrant(train_four_quadrant(&labelled, cfg)?))
        }
    }
}

/// One-vs-rest training over quadrant labels.
pub fn train_four_quadrant(
    rows: &[(Vec<f64>, Quadrant)],
    cfg: &TrainConfig,
) -> Result<QuadrantClassifier, ModelError> {
    let train = |q: Quadrant| {
        let samples: Vec<Sample> =
            rows.iter().map(|(x, label)| Sample::new(x.clone(), *label == q)).collect();
        let cfg_q = TrainConfig { seed: derive_seed(cfg.seed, 10 + q.index() as u64), ..cfg.clone() };
        train_logistic(&samples, &cfg_q)
    };
    let ((s, l), (d, p)) = rayon::join(
        || rayon::join(|| train(Quadrant::SureThing), || train(Quadrant::LostCause)),
        || rayon::join(|| train(Quadrant::DoNotDisturb), || train(Quadrant::Persuadable)),
    );
    Ok(QuadrantClassifier { models: [s?, l?, d?, p?] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_classifier(rng: &mut impl Rng, d: usize) -> Classifier {
        Classifier::from_weights((0..=d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    fn random_x(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn two_model_identities() {
        let mut rng = stream_rng(1, 0);
        let m = random_classifier(&mut rng, 3);
        let x = random_x(&mut rng, 3);
        assert_eq!(uplift_two_model(&m, &m, &x, &x).unwrap().value(), 0.0);

        // p_T = 0.8, p_C = 0.3 via intercept-only models.
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let mt = Classifier::from_weights(vec![0.0, logit(0.8)]).unwrap();
        let mc = Classifier::from_weights(vec![0.0, logit(0.3)]).unwrap();
        assert!((uplift_two_model(&mt, &mc, &[1.0], &[1.0]).unwrap().value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_model_matches_composition_and_is_antisymmetric() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..100 {
            let mt = random_classifier(&mut rng, 4);
            let mc = random_classifier(&mut rng, 4);
            let x = random_x(&mut rng, 4);
            let xp = random_x(&mut rng, 4);
            let lift = uplift_two_model(&mt, &mc, &x, &xp).unwrap().value();
            assert_eq!(lift, mt.predict_proba(&x).unwrap() - mc.predict_proba(&xp).unwrap());
            assert!((-1.0..=1.0).contains(&lift));
            let swapped = uplift_two_model(&mc, &mt, &x, &x).unwrap().value();
            assert_eq!(swapped, -uplift_two_model(&mt, &mc, &x, &x).unwrap().value());
        }
    }

    #[test]
    fn dummy_indicator_behaviour() {
        let mut rng = stream_rng(3, 0);
        let zero_d = Classifier::from_weights(vec![0.5, -1.0, 0.0, 0.2]).unwrap();
        let pos_d = Classifier::from_weights(vec![0.5, -1.0, 0.7, 0.2]).unwrap();
        for _ in 0..100 {
            let x = random_x(&mut rng, 2);
            assert_eq!(uplift_dummy(&zero_d, &x).unwrap().value(), 0.0);
            assert!(uplift_dummy(&pos_d, &x).unwrap().value() > 0.0);
            let mut x1 = x.clone();
            x1.push(1.0);
            let mut x0 = x.clone();
            x0.push(0.0);
            let expected = pos_d.predict_proba(&x1).unwrap() - pos_d.predict_proba(&x0).unwrap();
            assert_eq!(uplift_dummy(&pos_d, &x).unwrap().value(), expected);
        }
        assert!(matches!(uplift_dummy(&pos_d, &[1.0]), Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn four_quadrant_distribution() {
        let uniform = QuadrantClassifier { models: std::array::from_fn(|_| Classifier::zeros(2)) };
        assert_eq!(uplift_four_quadrant(&uniform, &[0.3, 9.0]).unwrap().value(), 0.25);
        let mut rng = stream_rng(4, 0);
        let m4 = QuadrantClassifier { models: std::array::from_fn(|_| random_classifier(&mut rng, 3)) };
        for _ in 0..100 {
            let x = random_x(&mut rng, 3);
            let p = m4.predict_distribution(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let t = QuadrantArm { model: &m4, treated: true }.predict(&x).unwrap();
            let c = QuadrantArm { model: &m4, treated: false }.predict(&x).unwrap();
            assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn bundle_round_trip() {
        let mut rng = stream_rng(5, 0);
        let models = [
            UpliftModel::TwoModel {
                treatment: random_classifier(&mut rng, 3),
                control: random_classifier(&mut rng, 3),
            },
            UpliftModel::Dummy(random_classifier(&mut rng, 4)),
            UpliftModel::FourQuadrant(QuadrantClassifier {
                models: std::array::from_fn(|_| random_classifier(&mut rng, 3)),
            }),
        ];
        for m in models {
            let back = UpliftModel::from_json_value(&m.to_json_value()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.feature_dim(), 3);
        }
        let bad = json!({"strategy": "two_model", "models": {"treatment": Classifier::zeros(2).to_value(),
            "control": Classifier::zeros(3).to_value()}});
        assert!(UpliftModel::from_json_value(&bad).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [UpliftStrategy::TwoModel, UpliftStrategy::Dummy, UpliftStrategy::FourQuadrant] {
            assert_eq!(UpliftStrategy::parse(s.name()), Some(s));
        }
        assert_eq!(UpliftStrategy::parse("four-quadrant"), Some(UpliftStrategy::FourQuadrant));
        assert_eq!(UpliftStrategy::parse("xgboost"), None);
    }
}
