use serde::{Deserialize, Serialize};

use crate::cluster::lloyd_kmeans;
use crate::error::{param_err, Result};
use crate::linalg::{least_squares_right, truncated_svd, Matrix};
use crate::scalar::Real;
use crate::theory::ensemble::TaskEnsemble;

const KMEANS_RESTARTS: u64 = 8;
const KMEANS_MAX_ITER: usize = 200;
const KMEANS_TOL: f64 = 1e-12;
/// Absolute slack on error comparisons.
pub const COMPARISON_SLACK: f64 = 1e-9;

/// Shared left factor with one right factor per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecompositionModel<T: Real> {
    pub assignments: Vec<usize>,
    /// `r x d2` per cluster, orthonormal rows.
    pub factors: Vec<Matrix<T>>,
    /// `d1 x r`, fit jointly over all tasks.
    pub shared: Matrix<T>,
    pub reconstructions: Vec<Matrix<T>>,
    pub task_errors: Vec<T>,
    pub total_error: T,
}

impl<T: Real> DecompositionModel<T> {
    pub fn rank(&self) -> usize {
        self.shared.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub seed: u64,
    pub k: usize,
    pub r_l: usize,
    pub r_g: usize,
    pub assignments: Vec<usize>,
    pub clustered_errors: Vec<f64>,
    pub global_errors: Vec<f64>,
    pub clustered_total: f64,
    pub global_total: f64,
    pub delta: f64,
    /// `clustered_total <= global_total` up to the comparison slack.
    pub inequality_holds: bool,
    /// `clustered_total < global_total` by more than the slack.
    pub strict: bool,
    /// `clustered_total <= global_total - delta` up to the slack.
    pub bound_holds: bool,
    pub centroid_separation: Option<f64>,
    pub intra_spread: f64,
}

fn mean_matrix<T: Real>(ms: &[&Matrix<T>]) -> Matrix<T> {
    let (rows, cols) = ms[0].shape();
    let w = T::one() / T::from_usize_lossy(ms.len());
    let mut out = Matrix::zeros(rows, cols);
    for m in ms {
        out.add_scaled(w, m).expect("equal task shapes");
    }
    out
}

fn right_factor<T: Real>(m: &Matrix<T>, r: usize) -> Result<Matrix<T>> {
    Ok(truncated_svd(m, r)?.right_vectors.transpose())
}

/// Fits `B` in `min Σ_i ||W_i - B A_{l(i)}||²` and reports per-task errors.
fn fit_shared<T: Real>(
    matrices: &[Matrix<T>],
    assignments: Vec<usize>,
    factors: Vec<Matrix<T>>,
) -> Result<DecompositionModel<T>> {
    let a_stack: Vec<&Matrix<T>> = assignments.iter().map(|&l| &factors[l]).collect();
    let w_stack: Vec<&Matrix<T>> = matrices.iter().collect();
    let shared = least_squares_right(&Matrix::hstack(&a_stack)?, &Matrix::hstack(&w_stack)?)?;
    let reconstructions = assignments
        .iter()
        .map(|&l| shared.matmul(&factors[l]))
        .collect::<Result<Vec<_>>>()?;
    let task_errors = matrices
        .iter()
        .zip(&reconstructions)
        .map(|(w, r)| Ok(w.sub(r)?.frobenius_norm_sq()))
        .collect::<Result<Vec<_>>>()?;
    let total_error = task_errors.iter().copied().sum();
    Ok(DecompositionModel { assignments, factors, shared, reconstructions, task_errors, total_error })
}

fn decompose_with_labels<T: Real>(
    matrices: &[Matrix<T>],
    assignments: Vec<usize>,
    k: usize,
    r: usize,
) -> Result<DecompositionModel<T>> {
    let factors = (0..k)
        .map(|l| {
            let members: Vec<&Matrix<T>> = matrices
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == l)
                .map(|(w, _)| w)
                .collect();
            right_factor(&mean_matrix(&members), r)
        })
        .collect::<Result<Vec<_>>>()?;
    fit_shared(matrices, assignments, factors)
}

/// Best of several seeded Lloyd runs on vectorized task matrices, with labels
/// renumbered in order of first appearance.
pub fn cluster_tasks<T: Real>(matrices: &[Matrix<T>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > matrices.len() {
        return Err(param_err!("k = {k} must be in 1..={}", matrices.len()));
    }
    let width = matrices[0].rows() * matrices[0].cols();
    let points = Matrix::from_fn(matrices.len(), width, |i, j| matrices[i].as_slice()[j]);
    let mut best: Option<(T, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let model = lloyd_kmeans(&points, k, seed.wrapping_add(restart), KMEANS_MAX_ITER, KMEANS_TOL)?;
        let obj = model.objective();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, model.assignments));
        }
    }
    let raw = best.expect("at least one restart").1;
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    Ok(raw
        .into_iter()
        .map(|l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect())
}

fn check_rank<T: Real>(ens: &TaskEnsemble<T>, r: usize) -> Result<()> {
    let max = ens.config.d1.min(ens.config.d2);
    if r == 0 || r > max {
        return Err(param_err!("factor rank {r} must be in 1..={max}"));
    }
    Ok(())
}

/// k-means over tasks, per-cluster centroid right factors, one shared left factor.
pub fn cluster_low_rank_decompose<T: Real>(ens: &TaskEnsemble<T>, k: usize, r: usize) -> Result<DecompositionModel<T>> {
    check_rank(ens, r)?;
    let labels = cluster_tasks(&ens.matrices, k, ens.seed)?;
    decompose_with_labels(&ens.matrices, labels, k, r)
}

/// One right factor from the mean of all tasks, shared left factor.
pub fn global_low_rank_decompose<T: Real>(ens: &TaskEnsemble<T>, r: usize) -> Result<DecompositionModel<T>> {
    check_rank(ens, r)?;
    decompose_with_labels(&ens.matrices, vec![0; ens.matrices.len()], 1, r)
}

/// Zero-pads `m` with extra rows (or columns when `cols`) up to `to`.
fn pad<T: Real>(m: &Matrix<T>, to: usize, cols: bool) -> Matrix<T> {
    if cols {
        Matrix::from_fn(m.rows(), to, |i, j| if j < m.cols() { m[(i, j)] } else { T::zero() })
    } else {
        Matrix::from_fn(to, m.cols(), |i, j| if i < m.rows() { m[(i, j)] } else { T::zero() })
    }
}

/// `Σ_i ||B (A_{l(i)} - A_global)||²` with the clustered `B`; factors of
/// different rank are zero-padded to the larger one.
pub fn reconstruction_gap<T: Real>(clustered: &DecompositionModel<T>, global: &DecompositionModel<T>) -> Result<T> {
    let width = clustered.rank().max(global.rank());
    let b = pad(&clustered.shared, width, true);
    let a_g = pad(&global.factors[0], width, false);
    let per_cluster = clustered
        .factors
        .iter()
        .map(|a| Ok(b.matmul(&pad(a, width, false).sub(&a_g)?)?.frobenius_norm_sq()))
        .collect::<Result<Vec<T>>>()?;
    Ok(clustered.assignments.iter().map(|&l| per_cluster[l]).sum())
}

/// Compares clustered and global reconstructions on one ensemble.
pub fn verify_theorem1<T: Real>(ens: &TaskEnsemble<T>, k: usize, r_l: usize, r_g: usize) -> Result<ReconstructionReport> {
    let clustered = cluster_low_rank_decompose(ens, k, r_l)?;
    let global = global_low_rank_decompose(ens, r_g)?;
    let delta = reconstruction_gap(&clustered, &global)?.as_f64();
    let clustered_total = clustered.total_error.as_f64();
    let global_total = global.total_error.as_f64();
    Ok(ReconstructionReport {
        seed: ens.seed,
        k,
        r_l,
        r_g,
        assignments: clustered.assignments.clone(),
        clustered_errors: clustered.task_errors.iter().map(|e| e.as_f64()).collect(),
        global_errors: global.task_errors.iter().map(|e| e.as_f64()).collect(),
        clustered_total,
        global_total,
        delta,
        inequality_holds: clustered_total <= global_total + COMPARISON_SLACK,
        strict: clustered_total < global_total - COMPARISON_SLACK,
        bound_holds: clustered_total <= global_total - delta + COMPARISON_SLACK,
        centroid_separation: ens.centroid_separation,
        intra_spread: ens.intra_spread,
    })
}
