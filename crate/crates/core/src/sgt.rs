//! Surrogate ground truth generation.
//!
//! Step I scores every individual with the uplift model on the start-of-window
//! features, ranks, and selects the budgeted campaign. Step II, after the
//! window closes, re-scores each individual with the model of the arm they
//! did *not* receive:
//!
//! * treated: `kpi - p_C(features_end)`
//! * untreated: `p_T(features_end) - kpi`
//!
//! then re-ranks and applies the same cut. The top of the new ranking is
//! the set of individuals who should have been treated.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{
    rank_by_score, select_top_k, CampaignError, CampaignSpec, Individual, IndividualId, LiftRanking,
};
use crate::models::{ArmModel, ModelError, UpliftModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SgtError {
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error("individual {id}: {source}")]
    Model { id: IndividualId, source: ModelError },
    #[error("individual {0} has no observed KPI")]
    MissingKpi(IndividualId),
    #[error("individual {0} has no end-of-window features")]
    MissingEndFeatures(IndividualId),
    #[error("individual {0} has no treatment flag")]
    MissingTreatment(IndividualId),
    #[error("individual {id}: treatment flag disagrees with the campaign selection")]
    TreatmentMismatch { id: IndividualId },
    #[error("selection covers {selection} ids but the population has {population}")]
    SizeMismatch { selection: usize, population: usize },
    #[error("individual {0} is not part of the campaign selection")]
    UnknownIndividual(IndividualId),
}

/// Output of Step I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSelection {
    /// Selected ids in ranking order.
    pub intervention: Vec<IndividualId>,
    pub no_intervention: Vec<IndividualId>,
    pub ranking_start: LiftRanking,
    pub size: usize,
}

impl CampaignSelection {
    pub fn treated_set(&self) -> HashSet<IndividualId> {
        self.intervention.iter().copied().collect()
    }

    /// Sets each individual's treatment flag from this selection.
    pub fn launch(&self, population: &mut [Individual]) {
        let treated = self.treated_set();
        for individual in population.iter_mut() {
            individual.treated = Some(treated.contains(&individual.id));
        }
    }
}

/// Output of Step II.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtLabels {
    pub surrogate_treat: BTreeSet<IndividualId>,
    pub surrogate_no_treat: BTreeSet<IndividualId>,
    pub surrogate_lift: BTreeMap<IndividualId, f64>,
    pub ranking_end: LiftRanking,
}

impl SgtLabels {
    /// `Some(true)` if the individual should have been treated.
    pub fn label(&self, id: IndividualId) -> Option<bool> {
        if self.surrogate_treat.contains(&id) {
            Some(true)
        } else if self.surrogate_no_treat.contains(&id) {
            Some(false)
        } else {
            None
        }
    }

    pub fn size(&self) -> usize {
        self.surrogate_treat.len()
    }
}

/// Step I: lift on `features_start`, ranking, budgeted selection.
pub fn step_one(
    population: &[Individual],
    model: &UpliftModel,
    spec: &CampaignSpec,
) -> Result<CampaignSelection, SgtError> {
    spec.validate()?;
    step_one_with(population, spec, |x| model.lift(x).map(|l| l.value()))
}

/// Step I with an arbitrary lift function.
pub fn step_one_with<F>(
    population: &[Individual],
    spec: &CampaignSpec,
    lift: F,
) -> Result<CampaignSelection, SgtError>
where
    F: Fn(&[f64]) -> Result<f64, ModelError> + Sync,
{
    if population.is_empty() {
        return Err(CampaignError::EmptyPopulation.into());
    }
    let scores: Vec<(IndividualId, f64)> = population
        .par_iter()
        .map(|ind| {
            lift(&ind.features_start)
                .map(|s| (ind.id, s))
                .map_err(|source| SgtError::Model { id: ind.id, source })
        })
        .collect::<Result<_, _>>()?;
    let ranking = rank_by_score(scores)?;
    let top = select_top_k(ranking, spec.budget_fraction, population.len())?;
    Ok(CampaignSelection {
        size: top.intervention.len(),
        intervention: top.intervention,
        no_intervention: top.complement,
        ranking_start: top.ranking,
    })
}

/// Surrogate lift for one individual after the campaign window.
pub fn rescore(
    individual: &Individual,
    m_t: &dyn ArmModel,
    m_c: &dyn ArmModel,
) -> Result<f64, SgtError> {
    let treated = individual.treated.ok_or(SgtError::MissingTreatment(individual.id))?;
    let kpi = individual.kpi_observed.ok_or(SgtError::MissingKpi(individual.id))?;
    if individual.features_end.is_empty() {
        return Err(SgtError::MissingEndFeatures(individual.id));
    }
    let x = &individual.features_end;
    let wrap = |source| SgtError::Model { id: individual.id, source };
    if treated {
        Ok(kpi - m_c.predict(x).map_err(wrap)?)
    } else {
        Ok(m_t.predict(x).map_err(wrap)? - kpi)
    }
}

/// Step II: re-score, re-rank and cut at `selection.size`.
pub fn step_two(
    population: &[Individual],
    selection: &CampaignSelection,
    m_t: &dyn ArmModel,
    m_c: &dyn ArmModel,
) -> Result<SgtLabels, SgtError> {
    let covered = selection.intervention.len() + selection.no_intervention.len();
    if covered != population.len() {
        return Err(SgtError::SizeMismatch { selection: covered, population: population.len() });
    }
    let treated = selection.treated_set();
    let untreated: HashSet<IndividualId> = selection.no_intervention.iter().copied().collect();
    for individual in population {
        let in_selection = treated.contains(&individual.id);
        if !in_selection && !untreated.contains(&individual.id) {
            return Err(SgtError::UnknownIndividual(individual.id));
        }
        if let Some(flag) = individual.treated {
            if flag != in_selection {
                return Err(SgtError::TreatmentMismatch { id: individual.id });
            }
        }
    }
    step_two_with_size(population, selection.size, m_t, m_c)
}

/// Step II from the individuals' own treatment flags and an explicit cut.
pub fn step_two_with_size(
    population: &[Individual],
    size: usize,
    m_t: &dyn ArmModel,
    m_c: &dyn ArmModel,
) -> Result<SgtLabels, SgtError> {
    if population.is_empty() {
        return Err(CampaignError::EmptyPopulation.into());
    }
    let lifts: Vec<(IndividualId, f64)> = population
        .par_iter()
        .map(|ind| rescore(ind, m_t, m_c).map(|s| (ind.id, s)))
        .collect::<Result<_, _>>()?;
    let ranking = rank_by_score(lifts.iter().copied())?.with_cut(size);
    Ok(SgtLabels {
        surrogate_treat: ranking.selected().iter().copied().collect(),
        surrogate_no_treat: ranking.unselected().iter().copied().collect(),
        surrogate_lift: lifts.into_iter().collect(),
        ranking_end: ranking,
    })
}

/// Step II using the arm views of an uplift model.
pub fn step_two_model(
    population: &[Individual],
    selection: &CampaignSelection,
    model: &UpliftModel,
) -> Result<SgtLabels, SgtError> {
    let m_t = model.treatment_arm();
    let m_c = model.control_arm();
    step_two(population, selection, m_t.as_ref(), m_c.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Classifier;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn constant(p: f64, d: usize) -> Classifier {
        let mut w = vec![0.0; d + 1];
        w[d] = logit(p);
        Classifier::from_weights(w).unwrap()
    }

    fn observed(id: IndividualId, treated: bool, kpi: f64) -> Individual {
        let mut ind = Individual::new(id, vec![0.0]);
        ind.features_end = vec![0.0];
        ind.treated = Some(treated);
        ind.kpi_observed = Some(kpi);
        ind
    }

    #[test]
    fn rescore_examples() {
        let m_t = constant(0.6, 1);
        let m_c = constant(0.3, 1);
        assert!((rescore(&observed(1, true, 1.0), &m_t, &m_c).unwrap() - 0.7).abs() < 1e-12);
        assert!((rescore(&observed(2, false, 0.0), &m_t, &m_c).unwrap() - 0.6).abs() < 1e-12);
        let m_c = constant(0.9, 1);
        assert!((rescore(&observed(3, true, 0.0), &m_t, &m_c).unwrap() + 0.9).abs() < 1e-12);
    }

    #[test]
    fn rescore_errors() {
        let m = constant(0.5, 1);
        let mut ind = observed(1, true, 1.0);
        ind.kpi_observed = None;
        assert_eq!(rescore(&ind, &m, &m), Err(SgtError::MissingKpi(1)));
        let mut ind = observed(2, true, 1.0);
        ind.features_end.clear();
        assert_eq!(rescore(&ind, &m, &m), Err(SgtError::MissingEndFeatures(2)));
        let mut ind = observed(3, true, 1.0);
        ind.treated = None;
        assert_eq!(rescore(&ind, &m, &m), Err(SgtError::MissingTreatment(3)));
    }

    #[test]
    fn identical_models_select_lowest_ids() {
        let population: Vec<Individual> =
            [9u64, 4, 7, 1, 3].iter().map(|&id| Individual::new(id, vec![id as f64])).collect();
        let m = Classifier::from_weights(vec![0.4, -0.1]).unwrap();
        let model = UpliftModel::TwoModel { treatment: m.clone(), control: m };
        let spec = CampaignSpec::default().with_budget(0.4);
        let selection = step_one(&population, &model, &spec).unwrap();
        assert_eq!(selection.intervention, vec![1, 3]);
        assert_eq!(selection.size, 2);
    }

    #[test]
    fn argmax_is_treated() {
        let population: Vec<Individual> = (0..10).map(|id| Individual::new(id, vec![id as f64])).collect();
        let model = UpliftModel::TwoModel {
            treatment: Classifier::from_weights(vec![1.0, -5.0]).unwrap(),
            control: constant(0.5, 1),
        };
        let selection = step_one(&population, &model, &CampaignSpec::default()).unwrap();
        assert_eq!(selection.intervention, vec![9]);
    }

    #[test]
    fn single_individual_is_labelled_positive() {
        let mut population = vec![Individual::new(0, vec![0.5])];
        let m = constant(0.2, 1);
        let model = UpliftModel::TwoModel { treatment: m.clone(), control: m };
        let selection = step_one(&population, &model, &CampaignSpec::default().with_budget(0.05)).unwrap();
        selection.launch(&mut population);
        population[0].features_end = vec![0.5];
        population[0].kpi_observed = Some(0.0);
        let labels = step_two_model(&population, &selection, &model).unwrap();
        assert_eq!(labels.label(0), Some(true));
    }

    #[test]
    fn step_two_checks_coverage_and_flags() {
        let mut population: Vec<Individual> = (0..4).map(|id| observed(id, id == 0, 0.0)).collect();
        let m = constant(0.5, 1);
        let model = UpliftModel::TwoModel { treatment: m.clone(), control: m };
        let selection = step_one(&population, &model, &CampaignSpec::default().with_budget(0.25)).unwrap();
        assert_eq!(selection.intervention, vec![0]);
        assert!(step_two_model(&population, &selection, &model).is_ok());
        assert!(matches!(
            step_two_model(&population[..3], &selection, &model),
            Err(SgtError::SizeMismatch { .. })
        ));
        population[1].treated = Some(true);
        assert_eq!(
            step_two_model(&population, &selection, &model),
            Err(SgtError::TreatmentMismatch { id: 1 })
        );
    }
}
