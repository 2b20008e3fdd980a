//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use sgt_core::campaign::selection_size;
use sgt_core::fairness::{
    average_odds, classify_band, disparate_impact, equal_opportunity, fnr_difference, group_confusion,
    predictive_equality, statistical_parity, MetricResult,
};
use sgt_core::harness::{prepare_campaign, run_budget, CampaignConfig};
use sgt_core::models::ArmModel;
use sgt_core::rng::stream_rng;
use sgt_core::sgt::{step_one_with, step_two};
use sgt_core::sim::{oracle_actions, Action};
use sgt_core::{
    evaluate_all, gap_closed, run_suite, Band, CampaignSpec, Classifier, Individual, IndividualId, Metric,
    OracleMode, SimConfig, SuiteConfig, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = outcome.pass && in_time;
    println!(
        "{} {name}: {} ({:.2}s, limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn imp_reproduction() -> Outcome {
    // (uplift, sgt, oracle, expected percent)
    let rows = [(6847.0, 7778.0, 7942.0, 85.0), (8697.0, 9077.0, 11126.0, 16.0)];
    let mut pass = true;
    let mut parts = vec![];
    for (uplift, sgt, oracle, expected) in rows {
        let imp = gap_closed(uplift, sgt, oracle).expect("non-degenerate gap");
        pass &= (imp - expected).abs() <= 0.5;
        parts.push(format!("{imp:.2}% vs {expected}%"));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn band_reproduction() -> Outcome {
    let outside_di = [1.228, 1.859, 2.708, 0.752, 0.661];
    let within_di = [0.942];
    let within_sp = [0.021, 0.066, 0.098, -0.006, -0.027, -0.04];
    let within_ao = [-0.003, 0.04, 0.052, -0.014, -0.011, -0.04];
    let within_eo = [-0.026, 0.008, -0.022, -0.02, 0.013, -0.035];
    let within_fnr = [0.026, -0.008, 0.022, 0.02, -0.013, 0.035];
    let within_pe = [0.021, 0.073, 0.127, -0.007, -0.036, -0.045];
    let mut cases: Vec<(Metric, f64, Band)> = vec![];
    cases.extend(outside_di.iter().map(|&v| (Metric::DI, v, Band::OutsideIdeal)));
    cases.extend(within_di.iter().map(|&v| (Metric::DI, v, Band::WithinIdeal)));
    for (metric, values) in [
        (Metric::SP, &within_sp),
        (Metric::AO, &within_ao),
        (Metric::EO, &within_eo),
        (Metric::FNRDiff, &within_fnr),
        (Metric::PE, &within_pe),
    ] {
        cases.extend(values.iter().map(|&v| (metric, v, Band::WithinIdeal)));
    }
    let wrong: Vec<String> = cases
        .iter()
        .filter(|(m, v, band)| classify_band(*m, *v) != *band)
        .map(|(m, v, _)| format!("{}={v}", m.name()))
        .collect();
    Outcome {
        pass: wrong.is_empty(),
        detail: if wrong.is_empty() {
            format!("{} reference values classified as expected", cases.len())
        } else {
            format!("misclassified {}", wrong.join(", "))
        },
    }
}

/// Per-element counting oracle in plain floating point. `None` marks an
/// undefined rate.
fn oracle_metrics(p: &[u8], y: &[u8], a: &[u8]) -> [Option<f64>; 6] {
    let mut n = [0.0f64; 2];
    let mut pos = [0.0f64; 2];
    let mut tp = [0.0f64; 2];
    let mut fp = [0.0f64; 2];
    let mut fneg = [0.0f64; 2];
    let mut tn = [0.0f64; 2];
    for i in 0..p.len() {
        let g = a[i] as usize;
        n[g] += 1.0;
        if p[i] == 1 {
            pos[g] += 1.0;
            if y[i] == 1 {
                tp[g] += 1.0;
            } else {
                fp[g] += 1.0;
            }
        } else if y[i] == 1 {
            fneg[g] += 1.0;
        } else {
            tn[g] += 1.0;
        }
    }
    let rate = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let r0 = pos[0] / n[0];
    let r1 = pos[1] / n[1];
    let sp = Some(r0 - r1);
    let di = if pos[1] > 0.0 { Some(r0 / r1) } else { None };
    let tpr = [rate(tp[0], tp[0] + fneg[0]), rate(tp[1], tp[1] + fneg[1])];
    let fnr = [rate(fneg[0], tp[0] + fneg[0]), rate(fneg[1], tp[1] + fneg[1])];
    let fpr = [rate(fp[0], fp[0] + tn[0]), rate(fp[1], fp[1] + tn[1])];
    let diff = |r: [Option<f64>; 2]| match r {
        [Some(r0), Some(r1)] => Some(r1 - r0),
        _ => None,
    };
    let eo = diff(tpr);
    let fnr_diff = diff(fnr);
    let pe = diff(fpr);
    let ao = match (pe, eo) {
        (Some(pe), Some(eo)) => Some((pe + eo) / 2.0),
        _ => None,
    };
    [sp, di, ao, eo, fnr_diff, pe]
}

fn library_metrics(p: &[u8], y: &[u8], a: &[u8]) -> [Option<f64>; 6] {
    let value = |r: Result<MetricResult, _>| r.ok().and_then(|m: MetricResult| m.value);
    let conf = group_confusion(p, y, a).expect("valid binary input");
    [
        value(statistical_parity(p, a)),
        value(disparate_impact(p, a)),
        value(average_odds(&conf)),
        value(equal_opportunity(&conf)),
        value(fnr_difference(&conf)),
        value(predictive_equality(&conf)),
    ]
}

fn metric_oracle_sweep() -> Outcome {
    let mut checked = 0u64;
    let mut mismatches = 0u64;
    let mut identity_failures = 0u64;
    let mut first_bad = None;
    let (mut p, mut y, mut a) = (vec![0u8; 8], vec![0u8; 8], vec![0u8; 8]);
    for len in 1..=8usize {
        for mask in 0u32..(1u32 << (3 * len)) {
            for i in 0..len {
                p[i] = ((mask >> i) & 1) as u8;
                y[i] = ((mask >> (len + i)) & 1) as u8;
                a[i] = ((mask >> (2 * len + i)) & 1) as u8;
            }
            let (p, y, a) = (&p[..len], &y[..len], &a[..len]);
            let ones = a.iter().filter(|&&g| g == 1).count();
            if ones == 0 || ones == len {
                continue;
            }
            checked += 1;
            let lib = library_metrics(p, y, a);
            let reference = oracle_metrics(p, y, a);
            let agree = lib.iter().zip(&reference).all(|(l, r)| match (l, r) {
                (Some(l), Some(r)) => (l - r).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            });
            if !agree {
                mismatches += 1;
                first_bad.get_or_insert((p.to_vec(), y.to_vec(), a.to_vec()));
            }
            if let (Some(eo), Some(fnr)) = (lib[3], lib[4]) {
                if eo + fnr != 0.0 {
                    identity_failures += 1;
                }
            }
        }
    }
    // The full report path agrees with the direct metric calls.
    let report = evaluate_all("a", &[1, 0, 1, 1], Some(&[1, 1, 0, 1]), &[0, 0, 1, 1]).unwrap();
    let direct = library_metrics(&[1, 0, 1, 1], &[1, 1, 0, 1], &[0, 0, 1, 1]);
    let report_agrees = Metric::ALL.iter().zip(direct).all(|(m, v)| report.value(*m) == v);
    Outcome {
        pass: mismatches == 0 && identity_failures == 0 && report_agrees && checked > 0,
        detail: format!(
            "{checked} triples, {mismatches} oracle mismatches, {identity_failures} EO+FNRDiff != 0{}",
            first_bad.map(|b| format!(", first {b:?}")).unwrap_or_default()
        ),
    }
}

fn random_classifier(rng: &mut impl Rng, d: usize) -> Classifier {
    Classifier::from_weights((0..=d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// A random campaign run through Steps I and II, with the models used.
struct RandomCampaign {
    population: Vec<Individual>,
    m_t: Classifier,
    m_c: Classifier,
    budget: f64,
}

fn random_campaign(rng: &mut impl Rng, max_n: usize) -> RandomCampaign {
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(1..=4);
    let mut ids: Vec<IndividualId> = (0..(n as u64 * 3)).collect();
    ids.shuffle(rng);
    let population = ids[..n]
        .iter()
        .map(|&id| {
            // Coarse grids make tied scores common.
            let mut ind = Individual::new(id, (0..d).map(|_| rng.random_range(-2..=2) as f64).collect());
            ind.features_end = (0..d).map(|_| rng.random_range(-2..=2) as f64).collect();
            ind.kpi_observed = Some(f64::from(u8::from(rng.random_bool(0.4))));
            ind = ind.with_protected("g", u8::from(rng.random_bool(0.5)));
            ind
        })
        .collect();
    RandomCampaign {
        population,
        m_t: random_classifier(rng, d),
        m_c: random_classifier(rng, d),
        budget: rng.random_range(0.01..=1.0),
    }
}

fn run_steps(
    population: &mut [Individual],
    m_t: &dyn ArmModel,
    m_c: &dyn ArmModel,
    budget: f64,
) -> (sgt_core::CampaignSelection, sgt_core::SgtLabels) {
    let spec = CampaignSpec::default().with_budget(budget);
    let selection = step_one_with(population, &spec, |x| Ok(m_t.predict(x)? - m_c.predict(x)?)).unwrap();
    selection.launch(population);
    let labels = step_two(population, &selection, m_t, m_c).unwrap();
    (selection, labels)
}

fn label_free_invariance() -> Outcome {
    let mut rng = stream_rng(0x4c46, 0);
    let mut differing = 0;
    let mut instances = 0;
    while instances < 1000 {
        let mut c = random_campaign(&mut rng, 300);
        let n = c.population.len();
        let membership: Vec<u8> = c.population.iter().map(|i| i.protected["g"]).collect();
        if membership.iter().all(|&g| g == membership[0]) {
            continue;
        }
        instances += 1;
        let (m_t, m_c) = (c.m_t.clone(), c.m_c.clone());
        let (selection, labels) = run_steps(&mut c.population, &m_t, &m_c, c.budget);
        let treated = selection.treated_set();
        let preds: Vec<u8> = c.population.iter().map(|i| u8::from(treated.contains(&i.id))).collect();
        let sgt: Vec<u8> = c.population.iter().map(|i| u8::from(labels.label(i.id) == Some(true))).collect();
        let random: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let base = evaluate_all("g", &preds, None, &membership).unwrap();
        for labels in [&random, &sgt] {
            let enhanced = evaluate_all("g", &preds, Some(labels), &membership).unwrap();
            for metric in [Metric::SP, Metric::DI] {
                let bits = |r: &sgt_core::FairnessReport| r.value(metric).map(f64::to_bits);
                if bits(&base) != bits(&enhanced) || base.get(metric).unwrap().band != enhanced.get(metric).unwrap().band {
                    differing += 1;
                }
            }
        }
    }
    Outcome {
        pass: differing == 0,
        detail: format!("{instances} instances, {differing} SP/DI differences across absent, random and SGT labels"),
    }
}

fn oracle_recovery() -> Outcome {
    let mut exact = 0;
    let mut imps = vec![];
    for seed in 0..10u64 {
        let mut config = CampaignConfig::seeded(seed);
        config.sim = SimConfig {
            n_individuals: 5000,
            seed,
            quadrant_mix: [0.15, 0.65, 0.10, 0.10],
            noise_level: 0.0,
            drift_magnitude: 0.0,
            ..SimConfig::default()
        };
        config.spec = CampaignSpec { oracle_mode: OracleMode::Budgeted, ..CampaignSpec::default() };
        config.train = TrainConfig { max_iters: 5000, l2: 1e-6, ..config.train };
        let prepared = prepare_campaign(&config).unwrap();
        let run = run_budget(&prepared, &config.spec).unwrap();
        let (actions, _) = oracle_actions(&prepared.campaign, &config.spec).unwrap();
        let oracle: BTreeSet<IndividualId> =
            actions.iter().filter(|(_, a)| **a == Action::Treat).map(|(id, _)| *id).collect();
        let imp = run.gap.imp_budgeted;
        if oracle == run.labels.surrogate_treat && imp == Some(100.0) {
            exact += 1;
        }
        imps.push(imp.map_or("undefined".to_string(), |v| format!("{v}")));
    }
    Outcome { pass: exact == 10, detail: format!("{exact}/10 seeds exact, imp [{}]", imps.join(", ")) }
}

fn suite_config() -> SuiteConfig {
    SuiteConfig::standard(0, 10, vec![0.05, 0.10, 0.15, 0.20])
}

fn usefulness(report: &sgt_core::SuiteReport) -> Outcome {
    let means: Vec<Option<f64>> = report.summary.iter().map(|s| s.mean).collect();
    let all_positive = means.iter().all(|m| m.is_some_and(|v| v > 0.0));
    let positive_at_decile = report
        .cells
        .iter()
        .filter(|c| c.budget == 0.10 && c.gap.as_ref().and_then(|g| g.imp).is_some_and(|v| v > 0.0))
        .count();
    let values: Vec<f64> = means.iter().map(|m| m.unwrap_or(f64::NAN)).collect();
    let inversions = values.windows(2).filter(|w| !(w[1] > w[0])).count();
    Outcome {
        pass: all_positive && positive_at_decile >= 8 && inversions <= 1,
        detail: format!(
            "means {:?}, {positive_at_decile}/10 positive at 10%, {inversions} inversions",
            values.iter().map(|v| format!("{v:.1}%")).collect::<Vec<_>>()
        ),
    }
}

fn structural_invariants() -> Outcome {
    let mut rng = stream_rng(0x41, 0);
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fail = |what| *failures.entry(what).or_default() += 1;
    for _ in 0..10_000 {
        let c = random_campaign(&mut rng, 40);
        let n = c.population.len();
        let all: BTreeSet<IndividualId> = c.population.iter().map(|i| i.id).collect();
        let mut population = c.population.clone();
        let (selection, labels) = run_steps(&mut population, &c.m_t, &c.m_c, c.budget);

        let treated: BTreeSet<_> = selection.intervention.iter().copied().collect();
        let untreated: BTreeSet<_> = selection.no_intervention.iter().copied().collect();
        if treated.len() + untreated.len() != n
            || !treated.is_disjoint(&untreated)
            || treated.union(&untreated).copied().collect::<BTreeSet<_>>() != all
            || selection.size != selection_size(c.budget, n).unwrap()
        {
            fail("selection partition");
        }
        if labels.surrogate_treat.len() + labels.surrogate_no_treat.len() != n
            || !labels.surrogate_treat.is_disjoint(&labels.surrogate_no_treat)
            || labels.surrogate_treat.union(&labels.surrogate_no_treat).copied().collect::<BTreeSet<_>>() != all
        {
            fail("sgt partition");
        }
        if labels.surrogate_treat.len() != selection.intervention.len() {
            fail("cut size");
        }

        // The arm a user received is never consulted for their surrogate lift.
        let d = c.m_t.feature_dim();
        let other_c = random_classifier(&mut rng, d);
        let other_t = random_classifier(&mut rng, d);
        let with_c = step_two(&population, &selection, &c.m_t, &other_c).unwrap();
        let with_t = step_two(&population, &selection, &other_t, &c.m_c).unwrap();
        for ind in &population {
            let id = ind.id;
            let kept = if treated.contains(&id) { &with_t } else { &with_c };
            if kept.surrogate_lift[&id].to_bits() != labels.surrogate_lift[&id].to_bits() {
                fail("complementary model");
            }
        }

        let mut shuffled = c.population.clone();
        shuffled.shuffle(&mut rng);
        let (selection2, labels2) = run_steps(&mut shuffled, &c.m_t, &c.m_c, c.budget);
        if selection2.intervention != selection.intervention || labels2.surrogate_treat != labels.surrogate_treat {
            fail("permutation invariance");
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "10000 cases: partitions, cut size, complementary model, permutation invariance hold".to_string()
        } else {
            format!("violations {failures:?}")
        },
    }
}

fn main() {
    let secs = Duration::from_secs;
    let mut pass = true;
    pass &= check("criterion 1 imp arithmetic", secs(1), imp_reproduction);
    pass &= check("criterion 2 fairness bands", secs(1), band_reproduction);
    pass &= check("criterion 3 metric oracle sweep", secs(60), metric_oracle_sweep);
    pass &= check("criterion 4 label-free invariance", secs(10), label_free_invariance);
    pass &= check("criterion 5 oracle recovery", secs(120), oracle_recovery);

    let mut first = None;
    pass &= check("criterion 6 usefulness under noise", secs(300), || {
        let report = run_suite(&suite_config()).unwrap();
        let outcome = usefulness(&report);
        first = Some(report.to_json());
        outcome
    });
    pass &= check("criterion 7 algorithm invariants", secs(60), structural_invariants);
    pass &= check("criterion 8 determinism", secs(300), || {
        let second = run_suite(&suite_config()).unwrap().to_json();
        let same = first.as_deref() == Some(second.as_str());
        Outcome { pass: same, detail: format!("{} bytes, identical: {same}", second.len()) }
    });
    if !pass {
        std::process::exit(1);
    }
}
