use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::theory::{generate_ensemble, EnsembleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskDataConfig {
    pub d_in: usize,
    pub d_out: usize,
    /// Number of tasks.
    pub m: usize,
    pub k_true: usize,
    /// Rank of the shared factor in every task update.
    pub rank: usize,
    /// Bound on the rank of within-cluster task differences.
    pub r_l: usize,
    /// Bound on the squared Frobenius norm of each task's residual term.
    pub noise: f64,
    pub center_scale: f64,
    pub spread: f64,
    pub samples_per_task: usize,
    /// Standard deviation of the Gaussian observation noise on targets.
    pub target_noise: f64,
    /// Entries of the frozen weight are `N(0, pretrained_scale² / d_in)`.
    pub pretrained_scale: f64,
    /// Length of a per-cluster mean added to the inputs; 0 keeps inputs standard normal.
    pub input_shift: f64,
}

impl Default for TaskDataConfig {
    fn default() -> Self {
        Self {
            d_in: 16,
            d_out: 16,
            m: 8,
            k_true: 2,
            rank: 2,
            r_l: 1,
            noise: 1e-4,
            center_scale: 1.0,
            spread: 0.1,
            samples_per_task: 32,
            target_noise: 0.0,
            pretrained_scale: 1.0,
            input_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TaskData<T: Real> {
    pub task_id: usize,
    pub cluster_id: usize,
    /// `n x d_in`, one sample per row.
    pub inputs: Matrix<T>,
    /// `n x d_out`.
    pub targets: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SyntheticTaskSet<T: Real> {
    pub config: TaskDataConfig,
    pub seed: u64,
    /// Frozen weight every adapter is built on.
    pub pretrained: Matrix<T>,
    /// Per-task target map `W*_i`, `d_out x d_in`.
    pub task_matrices: Vec<Matrix<T>>,
    pub tasks: Vec<TaskData<T>>,
}

impl<T: Real> SyntheticTaskSet<T> {
    pub fn sample_count(&self) -> usize {
        self.tasks.iter().map(|t| t.inputs.rows()).sum()
    }
}

/// Tasks `W*_i = W_0 + U_i` where the updates `U_i` form a planted clustered
/// ensemble (shared left factor, cluster right factors, rank-`r_l` spread).
pub fn make_multitask_data<T: Real>(cfg: &TaskDataConfig, seed: u64) -> Result<SyntheticTaskSet<T>> {
    if cfg.samples_per_task == 0 {
        return Err(config_err!("samples_per_task must be positive"));
    }
    if !(cfg.target_noise >= 0.0 && cfg.input_shift >= 0.0 && cfg.pretrained_scale >= 0.0) {
        return Err(config_err!("target_noise, input_shift and pretrained_scale must be non-negative"));
    }
    let ens_cfg = EnsembleConfig {
        d1: cfg.d_out,
        d2: cfg.d_in,
        m: cfg.m,
        k_true: cfg.k_true,
        rank: cfg.rank,
        intra_rank: cfg.r_l,
        noise: cfg.noise,
        center_scale: cfg.center_scale,
        spread: cfg.spread,
        rare: None,
    };
    let ens = generate_ensemble::<f64>(&ens_cfg, seed).map_err(|e| match e {
        Error::Parameter(msg) => config_err!("{msg}"),
        other => other,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xda7a_5e7);
    let std = cfg.pretrained_scale / (cfg.d_in as f64).sqrt();
    let pretrained = Matrix::from_fn(cfg.d_out, cfg.d_in, |_, _| std * rng.sample::<f64, _>(StandardNormal));
    let shifts: Vec<Vec<f64>> = (0..cfg.k_true)
        .map(|_| {
            let v: Vec<f64> = (0..cfg.d_in).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| cfg.input_shift * x / norm).collect()
        })
        .collect();

    let mut task_matrices = Vec::with_capacity(cfg.m);
    let mut tasks = Vec::with_capacity(cfg.m);
    for (i, update) in ens.matrices.iter().enumerate() {
        let w_star = pretrained.add(update)?;
        let cluster_id = ens.true_labels[i];
        let n = cfg.samples_per_task;
        let inputs = Matrix::from_fn(n, cfg.d_in, |_, j| shifts[cluster_id][j] + rng.sample::<f64, _>(StandardNormal));
        let mut targets = inputs.matmul(&w_star.transpose())?;
        for v in targets.as_mut_slice() {
            *v += cfg.target_noise * rng.sample::<f64, _>(StandardNormal);
        }
        task_matrices.push(w_star.cast());
        tasks.push(TaskData { task_id: i, cluster_id, inputs: inputs.cast(), targets: targets.cast() });
    }
    Ok(SyntheticTaskSet { config: cfg.clone(), seed, pretrained: pretrained.cast(), task_matrices, tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;

    #[test]
    fn degenerate_tasks_are_identical() {
        let cfg = TaskDataConfig { k_true: 1, r_l: 0, noise: 0.0, ..Default::default() };
        let data = make_multitask_data::<f64>(&cfg, 1).unwrap();
        for w in &data.task_matrices[1..] {
            assert_eq!(w, &data.task_matrices[0]);
        }
    }

    #[test]
    fn same_cluster_differences_have_low_rank() {
        let data = make_multitask_data::<f64>(&TaskDataConfig::default(), 2).unwrap();
        for i in 0..data.tasks.len() {
            for j in i + 1..data.tasks.len() {
                if data.tasks[i].cluster_id == data.tasks[j].cluster_id {
                    let d = data.task_matrices[i].sub(&data.task_matrices[j]).unwrap();
                    assert!(numerical_rank(&d, 1e-9).unwrap() <= 1);
                }
            }
        }
    }

    #[test]
    fn targets_follow_task_maps() {
        let data = make_multitask_data::<f64>(&TaskDataConfig::default(), 3).unwrap();
        let t = &data.tasks[1];
        let pred = t.inputs.matmul(&data.task_matrices[1].transpose()).unwrap();
        assert!(pred.max_abs_diff(&t.targets).unwrap() < 1e-12);
    }

    #[test]
    fn infeasible_rank_is_config_error() {
        let cfg = TaskDataConfig { r_l: 16, ..Default::default() };
        assert!(matches!(make_multitask_data::<f64>(&cfg, 0), Err(Error::Config(_))));
    }
}
