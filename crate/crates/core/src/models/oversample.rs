//! Random minority oversampling: minority rows are duplicated (with
//! replacement) and each copy gets a small Gaussian jitter.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ModelError, Sample};
use crate::rng::stream_rng;

/// Default jitter, as a fraction of each feature's standard deviation.
pub const DEFAULT_JITTER: f64 = 0.01;

/// Oversamples the minority class to `ratio` with the default jitter.
pub fn oversample_minority(rows: &[Sample], ratio: f64, seed: u64) -> Result<Vec<Sample>, ModelError> {
    oversample_with_jitter(rows, ratio, DEFAULT_JITTER, seed)
}

/// Appends minority copies until the minority share reaches `ratio`
/// (capped at 0.5). Original rows come first and are unchanged.
pub fn oversample_with_jitter(
    rows: &[Sample],
    ratio: f64,
    jitter_scale: f64,
    seed: u64,
) -> Result<Vec<Sample>, ModelError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(ModelError::InvalidConfig(format!("oversample ratio {ratio} outside (0, 1]")));
    }
    let positives = rows.iter().filter(|r| r.label).count();
    let negatives = rows.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ModelError::DegenerateLabels);
    }
    let minority_label = positives < negatives;
    let m = positives.min(negatives) as f64;
    let n = rows.len() as f64;
    let target = ratio.min(0.5);
    let extra = ((target * n - m) / (1.0 - target)).round();
    if extra <= 0.0 {
        return Ok(rows.to_vec());
    }
    let extra = extra as usize;

    let minority: Vec<&Sample> = rows.iter().filter(|r| r.label == minority_label).collect();
    let d = rows[0].features.len();
    let mut std = vec![0.0; d];
    if jitter_scale > 0.0 {
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for r in rows {
            for j in 0..d {
                let c = r.features[j] - mean[j];
                std[j] += c * c;
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt() * jitter_scale);
    }

    let mut rng = stream_rng(seed, 0x05a3);
    let mut out = Vec::with_capacity(rows.len() + extra);
    out.extend_from_slice(rows);
    for _ in 0..extra {
        let source = minority[rng.random_range(0..minority.len())];
        let mut copy = source.clone();
        if jitter_scale > 0.0 {
            for (v, s) in copy.features.iter_mut().zip(&std) {
                let e: f64 = rng.sample(StandardNormal);
                *v += e * s;
            }
        }
        out.push(copy);
    }
    Ok(out)
}
