use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{default_rank_tol, numerical_rank, Matrix};
use crate::scalar::Real;

/// A cluster whose tasks live on a few coordinate rows and columns only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RareCluster {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub d1: usize,
    pub d2: usize,
    /// Number of tasks.
    pub m: usize,
    pub k_true: usize,
    /// Rank of the planted shared factor and of every cluster center.
    pub rank: usize,
    /// Bound on the rank of any within-cluster task difference.
    pub intra_rank: usize,
    /// Bound on the squared Frobenius norm of each task's residual term.
    pub noise: f64,
    pub center_scale: f64,
    /// Largest Frobenius distance of a noiseless task from its cluster center.
    pub spread: f64,
    /// When set, the last cluster is rare.
    pub rare: Option<RareCluster>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            d1: 16,
            d2: 16,
            m: 12,
            k_true: 3,
            rank: 2,
            intra_rank: 1,
            noise: 1e-4,
            center_scale: 10.0,
            spread: 0.5,
            rare: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let min_d = self.d1.min(self.d2);
        if self.k_true == 0 || self.k_true > self.m {
            return Err(param_err!("k_true = {} must be in 1..={}", self.k_true, self.m));
        }
        if self.rank == 0 || self.rank >= min_d {
            return Err(param_err!("rank = {} must be in 1..{min_d}", self.rank));
        }
        if self.intra_rank >= min_d {
            return Err(param_err!("intra_rank = {} must be below {min_d}", self.intra_rank));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(param_err!("noise and spread must be finite and non-negative"));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(param_err!("center_scale must be positive"));
        }
        if let Some(rare) = self.rare {
            if self.k_true < 2 {
                return Err(param_err!("a rare cluster needs k_true >= 2"));
            }
            if rare.rows == 0 || rare.rows > rare.cols || rare.rows > self.d1 || rare.cols > self.d2 {
                return Err(param_err!(
                    "rare block {}x{} must satisfy 1 <= rows <= cols and fit in {}x{}",
                    rare.rows,
                    rare.cols,
                    self.d1,
                    self.d2
                ));
            }
        }
        Ok(())
    }
}

/// Task matrices `W_i = B A_i + E_i` grouped into planted clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TaskEnsemble<T: Real> {
    pub config: EnsembleConfig,
    pub seed: u64,
    pub matrices: Vec<Matrix<T>>,
    pub true_labels: Vec<usize>,
    pub shared_b: Matrix<T>,
    pub per_task_a: Vec<Matrix<T>>,
    /// Planted cluster centers; each equals the mean of its members.
    pub centers: Vec<Matrix<T>>,
    pub noise_budget: f64,
    pub intra_rank: usize,
    pub global_rank: usize,
    /// Smallest Frobenius distance between two planted centers; `None` for one cluster.
    pub centroid_separation: Option<f64>,
    /// Largest Frobenius distance of a task from its center.
    pub intra_spread: f64,
}

impl<T: Real> TaskEnsemble<T> {
    pub fn members(&self, l: usize) -> Vec<usize> {
        (0..self.matrices.len()).filter(|&i| self.true_labels[i] == l).collect()
    }

    pub fn k_true(&self) -> usize {
        self.config.k_true
    }

    /// Checks the within-cluster rank bound and the residual norm bound.
    pub fn check_assumptions(&self) -> Result<()> {
        let tol = default_rank_tol::<T>();
        for l in 0..self.k_true() {
            let members = self.members(l);
            let first = &self.matrices[members[0]];
            let diffs = members[1..]
                .iter()
                .map(|&i| self.matrices[i].sub(first))
                .collect::<Result<Vec<_>>>()?;
            if diffs.is_empty() {
                continue;
            }
            // Every pairwise difference has its columns in the column space of this stack.
            let stacked = Matrix::hstack(&diffs.iter().collect::<Vec<_>>())?;
            let rank = numerical_rank(&stacked, tol)?;
            if rank > self.intra_rank {
                return Err(Error::Constraint(format!(
                    "cluster {l}: task differences span rank {rank} > {}",
                    self.intra_rank
                )));
            }
        }
        let slack = self.noise_budget * (1.0 + 1e-9) + 1e-20;
        for (i, (w, a)) in self.matrices.iter().zip(&self.per_task_a).enumerate() {
            let resid = w.sub(&self.shared_b.matmul(a)?)?.frobenius_norm_sq().as_f64();
            if resid > slack {
                return Err(Error::Constraint(format!(
                    "task {i}: residual {resid:e} exceeds the noise budget {:e}",
                    self.noise_budget
                )));
            }
        }
        Ok(())
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `r x d` matrix with orthonormal rows.
pub(crate) fn orthonormal_rows(r: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    loop {
        let mut m = gaussian(r, d, rng);
        let mut ok = true;
        for i in 0..r {
            for j in 0..i {
                let proj: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                let prev = m.row(j).to_vec();
                for (x, p) in m.row_mut(i).iter_mut().zip(&prev) {
                    *x -= proj * p;
                }
            }
            let norm = m.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            m.row_mut(i).iter_mut().for_each(|x| *x /= norm);
        }
        if ok {
            return m;
        }
    }
}

/// Embeds `block` (rows x |cols|) into a zero `rows x width` matrix at the given columns.
fn embed_cols(block: &Matrix<f64>, cols: &[usize], width: usize) -> Matrix<f64> {
    let mut out = Matrix::zeros(block.rows(), width);
    for i in 0..block.rows() {
        for (c, &j) in cols.iter().enumerate() {
            out[(i, j)] = block[(i, c)];
        }
    }
    out
}

fn sorted_subset(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v = index::sample(rng, n, count).into_vec();
    v.sort_unstable();
    v
}

/// Plants `k_true` centers `s B A_l` (orthonormal-row `A_l`, orthogonal `B`
/// columns of distinct norms) and perturbs each task inside a rank-`intra_rank`
/// row space shared by its cluster:
/// `W_i = s B A_l + (B G_l + F_l) Q_i`, with `Q_i` centered over the cluster.
/// The `F_l Q_i` term is the residual and is scaled to use the whole noise budget.
pub fn generate_ensemble<T: Real>(cfg: &EnsembleConfig, seed: u64) -> Result<TaskEnsemble<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d1, d2, r, rl, s) = (cfg.d1, cfg.d2, cfg.rank, cfg.intra_rank, cfg.center_scale);
    let dense_clusters = if cfg.rare.is_some() { cfg.k_true - 1 } else { cfg.k_true };

    let q = orthonormal_rows(r, d1, &mut rng).transpose();
    let b_dense = Matrix::from_fn(d1, r, |i, j| q[(i, j)] * (1.0 + (r - j) as f64 / r as f64));
    let (b_rare, rare_cols) = match cfg.rare {
        Some(rare) => {
            let rows = sorted_subset(d1, rare.rows, &mut rng);
            let cols = sorted_subset(d2, rare.cols, &mut rng);
            let mut e = Matrix::zeros(d1, rare.rows);
            for (c, &i) in rows.iter().enumerate() {
                e[(i, c)] = 1.0;
            }
            (Some(e), cols)
        }
        None => (None, Vec::new()),
    };

    let labels: Vec<usize> = (0..cfg.m).map(|i| i % cfg.k_true).collect();
    let r_rare = b_rare.as_ref().map_or(0, Matrix::cols);
    let shared_b = match &b_rare {
        Some(e) => Matrix::hstack(&[&b_dense, e])?,
        None => b_dense.clone(),
    };

    let mut matrices = vec![Matrix::zeros(d1, d2); cfg.m];
    let mut per_task_a = vec![Matrix::zeros(r + r_rare, d2); cfg.m];
    let mut centers = Vec::with_capacity(cfg.k_true);
    for l in 0..cfg.k_true {
        let rare = l >= dense_clusters;
        let (b_l, offset, width) = if rare {
            (b_rare.as_ref().expect("rare factor"), r, r_rare)
        } else {
            (&b_dense, 0, r)
        };
        let center_a = if rare {
            embed_cols(&orthonormal_rows(width, rare_cols.len(), &mut rng), &rare_cols, d2)
        } else {
            orthonormal_rows(width, d2, &mut rng)
        }
        .scale(s);
        let center = b_l.matmul(&center_a)?;

        let members: Vec<usize> = (0..cfg.m).filter(|&i| labels[i] == l).collect();
        let mut qs: Vec<Matrix<f64>> = members
            .iter()
            .map(|_| {
                if rare {
                    embed_cols(&gaussian(rl, rare_cols.len(), &mut rng), &rare_cols, d2)
                } else {
                    gaussian(rl, d2, &mut rng)
                }
            })
            .collect();
        let mut mean = Matrix::zeros(rl, d2);
        for qi in &qs {
            mean.add_scaled(1.0 / qs.len() as f64, qi)?;
        }
        for qi in &mut qs {
            *qi = qi.sub(&mean)?;
        }

        let mut g = gaussian(width, rl, &mut rng);
        let bg = b_l.matmul(&g)?;
        let max_p = qs.iter().map(|qi| bg.matmul(qi).map(|p| p.frobenius_norm())).collect::<Result<Vec<_>>>()?;
        let max_p = max_p.into_iter().fold(0.0, f64::max);
        if max_p > 0.0 {
            g = g.scale(cfg.spread / max_p);
        }
        let mut f = gaussian(d1, rl, &mut rng);
        let max_n = qs
            .iter()
            .map(|qi| f.matmul(qi).map(|n| n.frobenius_norm_sq()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if max_n > 0.0 {
            f = f.scale((cfg.noise / max_n).sqrt());
        }

        for (&i, qi) in members.iter().zip(&qs) {
            let a_task = center_a.add(&g.matmul(qi)?)?;
            let w = center.add(&b_l.matmul(&g.matmul(qi)?)?)?.add(&f.matmul(qi)?)?;
            matrices[i] = w;
            let a_full = &mut per_task_a[i];
            for row in 0..width {
                a_full.row_mut(offset + row).copy_from_slice(a_task.row(row));
            }
        }
        centers.push(center);
    }

    let centroid_separation = (cfg.k_true > 1).then(|| {
        let mut best = f64::INFINITY;
        for a in 0..centers.len() {
            for b in a + 1..centers.len() {
                best = best.min(centers[a].sub(&centers[b]).expect("equal shapes").frobenius_norm());
            }
        }
        best
    });
    let intra_spread = matrices
        .iter()
        .zip(&labels)
        .map(|(w, &l)| w.sub(&centers[l]).expect("equal shapes").frobenius_norm())
        .fold(0.0, f64::max);

    let ens = TaskEnsemble {
        config: cfg.clone(),
        seed,
        matrices: matrices.iter().map(Matrix::cast).collect(),
        true_labels: labels,
        shared_b: shared_b.cast(),
        per_task_a: per_task_a.iter().map(Matrix::cast).collect(),
        centers: centers.iter().map(Matrix::cast).collect(),
        noise_budget: cfg.noise,
        intra_rank: rl,
        global_rank: r,
        centroid_separation,
        intra_spread,
    };
    ens.check_assumptions()?;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_single_cluster_is_constant() {
        let cfg = EnsembleConfig { k_true: 1, intra_rank: 0, noise: 0.0, m: 5, ..Default::default() };
        let ens = generate_ensemble::<f64>(&cfg, 3).unwrap();
        for w in &ens.matrices[1..] {
            assert_eq!(w, &ens.matrices[0]);
        }
        assert_eq!(ens.centroid_separation, None);
    }

    #[test]
    fn centers_are_member_means() {
        let ens = generate_ensemble::<f64>(&EnsembleConfig::default(), 9).unwrap();
        for l in 0..ens.k_true() {
            let members = ens.members(l);
            let mut mean = Matrix::zeros(16, 16);
            for &i in &members {
                mean.add_scaled(1.0 / members.len() as f64, &ens.matrices[i]).unwrap();
            }
            assert!(mean.max_abs_diff(&ens.centers[l]).unwrap() < 1e-10);
        }
        let spread = ens.intra_spread;
        assert!(spread <= 0.5 + 1e-2 + 1e-9, "{spread}");
    }

    #[test]
    fn rare_cluster_support() {
        let cfg = EnsembleConfig {
            k_true: 2,
            noise: 0.0,
            rare: Some(RareCluster { rows: 2, cols: 3 }),
            ..Default::default()
        };
        let ens = generate_ensemble::<f64>(&cfg, 4).unwrap();
        let w = &ens.matrices[ens.members(1)[0]];
        let nz_rows = (0..16).filter(|&i| w.row(i).iter().any(|&x| x != 0.0)).count();
        let nz_cols = (0..16).filter(|&j| w.col(j).iter().any(|&x| x != 0.0)).count();
        assert!(nz_rows <= 2 && nz_cols <= 3);
        assert_eq!(ens.shared_b.cols(), 4);
    }

    #[test]
    fn infeasible_configs() {
        let bad = [
            EnsembleConfig { k_true: 13, ..Default::default() },
            EnsembleConfig { rank: 16, ..Default::default() },
            EnsembleConfig { intra_rank: 16, ..Default::default() },
            EnsembleConfig { rare: Some(RareCluster { rows: 4, cols: 2 }), ..Default::default() },
            EnsembleConfig { noise: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_ensemble::<f64>(&cfg, 0), Err(Error::Parameter(_))), "{cfg:?}");
        }
    }
}
