use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{cur_decompose, sample_pivots_uniform, weighted_sample_without_replacement, Axis, PivotSet};
use crate::error::{param_err, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::theory::ensemble::TaskEnsemble;

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
/// A global-pivot trial is "bad" when its error exceeds this multiple of the local median.
pub const BAD_PIVOT_FACTOR: f64 = 5.0;
pub const LOCAL_DISTRIBUTION: &str = "squared row/column norms of the planted-cluster centroid, without replacement";
pub const GLOBAL_DISTRIBUTION: &str = "uniform over all rows/columns, without replacement";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub global_max_error: f64,
    pub local_max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotStudyReport {
    pub seed: u64,
    pub trials: usize,
    pub pivot_count: usize,
    pub global_distribution: String,
    pub local_distribution: String,
    pub outcomes: Vec<TrialOutcome>,
    pub mean_global: f64,
    pub mean_local: f64,
    /// Mean of `global - local` over trials.
    pub mean_difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_resamples: usize,
    /// Fraction of trials whose global error exceeds 5x the median local error.
    pub bad_pivot_fraction: f64,
    /// Per cluster, the largest distance of a member from the cluster mean.
    pub cluster_consistency: Vec<f64>,
    /// Per cluster, the largest pairwise member distance.
    pub cluster_diameter: Vec<f64>,
}

fn max_cur_error<T: Real>(tasks: &[(&Matrix<T>, &PivotSet, &PivotSet)]) -> Result<f64> {
    tasks.iter().try_fold(0.0f64, |acc, (w, rows, cols)| {
        Ok(acc.max(cur_decompose(w, rows, cols)?.residual.as_f64().powi(2)))
    })
}

fn norm_weights<T: Real>(m: &Matrix<T>, axis: Axis) -> Vec<T> {
    match axis {
        Axis::Rows => (0..m.rows()).map(|i| m.row(i).iter().map(|&x| x * x).sum()).collect(),
        Axis::Cols => (0..m.cols()).map(|j| m.col(j).iter().map(|&x| x * x).sum()).collect(),
    }
}

fn sample_weighted(weights: &[f64], count: usize, axis: Axis, rng: &mut ChaCha8Rng) -> Result<PivotSet> {
    let mut idx = weighted_sample_without_replacement(weights, count, rng)?;
    idx.sort_unstable();
    PivotSet::new(idx, axis)
}

fn run_trial<T: Real>(
    ens: &TaskEnsemble<T>,
    cluster_means: &[Matrix<T>],
    pivot_count: usize,
    seed: u64,
    trial: usize,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    let (d1, d2) = (ens.config.d1, ens.config.d2);
    let rows = sample_pivots_uniform(d1, pivot_count, rng.random())?;
    let cols = sample_pivots_uniform(d2, pivot_count, rng.random())?.with_axis(Axis::Cols);
    let global: Vec<_> = ens.matrices.iter().map(|w| (w, &rows, &cols)).collect();
    let global_max_error = max_cur_error(&global)?;

    let local_pivots = cluster_means
        .iter()
        .map(|m| {
            let rw: Vec<f64> = norm_weights(m, Axis::Rows).iter().map(|x| x.as_f64()).collect();
            let cw: Vec<f64> = norm_weights(m, Axis::Cols).iter().map(|x| x.as_f64()).collect();
            Ok((
                sample_weighted(&rw, pivot_count, Axis::Rows, &mut rng)?,
                sample_weighted(&cw, pivot_count, Axis::Cols, &mut rng)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let local: Vec<_> = ens
        .matrices
        .iter()
        .zip(&ens.true_labels)
        .map(|(w, &l)| (w, &local_pivots[l].0, &local_pivots[l].1))
        .collect();
    let local_max_error = max_cur_error(&local)?;
    Ok(TrialOutcome { trial, global_max_error, local_max_error })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Percentile bootstrap interval (95%) for the mean of `diffs`.
pub fn bootstrap_mean_ci(diffs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = ((0.025 * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((0.975 * resamples as f64).ceil() as usize).max(1) - 1).min(resamples - 1);
    (means[lo], means[hi])
}

/// Per-cluster (consistency, diameter) over the planted labels.
fn cluster_geometry<T: Real>(ens: &TaskEnsemble<T>, means: &[Matrix<T>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut consistency = Vec::new();
    let mut diameter = Vec::new();
    for (l, mean) in means.iter().enumerate() {
        let members = ens.members(l);
        let mut c = 0.0f64;
        let mut d = 0.0f64;
        for (a, &i) in members.iter().enumerate() {
            c = c.max(ens.matrices[i].sub(mean)?.frobenius_norm().as_f64());
            for &j in &members[a + 1..] {
                d = d.max(ens.matrices[i].sub(&ens.matrices[j])?.frobenius_norm().as_f64());
            }
        }
        consistency.push(c);
        diameter.push(d);
    }
    Ok((consistency, diameter))
}

/// Max-over-tasks CUR error with globally uniform pivots versus pivots drawn
/// per planted cluster from its centroid, over independent seeded trials.
pub fn pivot_stability_study<T: Real>(
    ens: &TaskEnsemble<T>,
    pivot_count: usize,
    trials: usize,
    seed: u64,
) -> Result<PivotStudyReport> {
    let max = ens.config.d1.min(ens.config.d2);
    if pivot_count == 0 || pivot_count > max {
        return Err(param_err!("pivot_count = {pivot_count} must be in 1..={max}"));
    }
    if trials == 0 {
        return Err(param_err!("at least one trial is required"));
    }
    let means: Vec<Matrix<T>> = (0..ens.k_true())
        .map(|l| {
            let members = ens.members(l);
            let mut m = Matrix::zeros(ens.config.d1, ens.config.d2);
            for &i in &members {
                m.add_scaled(T::one() / T::from_usize_lossy(members.len()), &ens.matrices[i])
                    .expect("equal task shapes");
            }
            m
        })
        .collect();
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(ens, &means, pivot_count, seed, t))
        .collect::<Result<Vec<_>>>()?;

    let global: Vec<f64> = outcomes.iter().map(|o| o.global_max_error).collect();
    let local: Vec<f64> = outcomes.iter().map(|o| o.local_max_error).collect();
    let diffs: Vec<f64> = global.iter().zip(&local).map(|(g, l)| g - l).collect();
    let (ci_low, ci_high) = bootstrap_mean_ci(&diffs, BOOTSTRAP_RESAMPLES, seed ^ 0x5eed_b007);
    let threshold = BAD_PIVOT_FACTOR * median(&local);
    let bad = global.iter().filter(|&&g| g > threshold).count();
    let (cluster_consistency, cluster_diameter) = cluster_geometry(ens, &means)?;
    Ok(PivotStudyReport {
        seed,
        trials,
        pivot_count,
        global_distribution: GLOBAL_DISTRIBUTION.into(),
        local_distribution: LOCAL_DISTRIBUTION.into(),
        mean_global: mean(&global),
        mean_local: mean(&local),
        mean_difference: mean(&diffs),
        ci_low,
        ci_high,
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        bad_pivot_fraction: bad as f64 / trials as f64,
        cluster_consistency,
        cluster_diameter,
        outcomes,
    })
}
