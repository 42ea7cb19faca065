//! Euclidean k-means with a minimum-cluster-size constraint.
//!
//! The constrained assignment step is a min-cost flow: every point ships one
//! unit to some cluster, every cluster owns `min_size` reserved sink slots
//! that must be filled before overflow slots are used. Successive shortest
//! paths are run on the residual graph collapsed onto the `k` cluster nodes,
//! where an edge `l -> l'` means "move the cheapest member of `l` to `l'`".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::scalar::Real;

/// How the size constraint is enforced during assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentStrategy {
    /// Exact minimum-cost assignment via successive shortest paths.
    #[default]
    MinCostFlow,
    /// Nearest-centroid assignment followed by moving the cheapest points into undersized clusters.
    GreedyRepair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub min_size: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub strategy: AssignmentStrategy,
}

impl KMeansConfig {
    pub fn new(k: usize, min_size: usize) -> Self {
        Self {
            k,
            min_size,
            seed: 0,
            max_iter: 300,
            tol: 1e-8,
            strategy: AssignmentStrategy::MinCostFlow,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_strategy(mut self, strategy: AssignmentStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(param_err!("cluster count must be at least 1"));
        }
        if self.k > n {
            return Err(param_err!("cluster count {} exceeds point count {n}", self.k));
        }
        if self.min_size == 0 {
            return Err(param_err!("minimum cluster size must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(param_err!("max_iter must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(param_err!("tolerance must be non-negative"));
        }
        if self.k * self.min_size > n {
            return Err(Error::Constraint(format!(
                "{} clusters of at least {} points need {} points, only {n} given",
                self.k,
                self.min_size,
                self.k * self.min_size
            )));
        }
        Ok(())
    }

    pub fn fit<T: Real>(&self, points: &Matrix<T>) -> Result<ClusterModel<T>> {
        let n = points.rows();
        self.validate(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = kmeans_plus_plus(points, self.k, &mut rng);
        let tol = T::lit(self.tol);
        let mut assignments = Vec::new();
        let mut history = Vec::new();
        let mut converged = false;
        let mut iterations_run = 0;
        for _ in 0..self.max_iter {
            iterations_run += 1;
            let cost = cost_table(points, &centroids);
            assignments = match self.strategy {
                AssignmentStrategy::MinCostFlow => assign_min_cost_flow(&cost, self.k, self.min_size),
                AssignmentStrategy::GreedyRepair => assign_greedy_repair(&cost, self.k, self.min_size),
            };
            let updated = compute_centroids(points, &assignments, self.k, &centroids);
            let movement = (0..self.k)
                .map(|l| sq_dist(updated.row(l), centroids.row(l)).sqrt())
                .fold(T::zero(), T::max);
            centroids = updated;
            history.push(objective(points, &assignments, &centroids));
            if movement < tol {
                converged = true;
                break;
            }
        }
        ClusterModel::assemble(points, assignments, centroids, self.min_size, iterations_run, converged, history)
    }
}

/// Result of a clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClusterModel<T: Real> {
    pub k: usize,
    /// Cluster id in `[0, k)` for every point.
    pub assignments: Vec<usize>,
    /// `k x d` centroid rows.
    pub centroids: Matrix<T>,
    pub min_size: usize,
    pub iterations_run: usize,
    pub converged: bool,
    /// Sum of squared distances to assigned centroids after each centroid update.
    pub objective_history: Vec<T>,
    /// Euclidean distance of each point to its assigned centroid.
    pub distances: Vec<T>,
}

impl<T: Real> ClusterModel<T> {
    /// Model for a fixed partition: centroids are member means.
    pub fn from_assignments(points: &Matrix<T>, assignments: Vec<usize>, k: usize) -> Result<Self> {
        if assignments.len() != points.rows() {
            return Err(param_err!(
                "{} assignments for {} points",
                assignments.len(),
                points.rows()
            ));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(param_err!("cluster id {bad} out of range for k = {k}"));
        }
        let fallback = Matrix::zeros(k, points.cols());
        let centroids = compute_centroids(points, &assignments, k, &fallback);
        let min_size = (0..k)
            .map(|l| assignments.iter().filter(|&&a| a == l).count())
            .min()
            .unwrap_or(0);
        let obj = objective(points, &assignments, &centroids);
        Self::assemble(points, assignments, centroids, min_size, 0, true, vec![obj])
    }

    fn assemble(
        points: &Matrix<T>,
        assignments: Vec<usize>,
        centroids: Matrix<T>,
        min_size: usize,
        iterations_run: usize,
        converged: bool,
        objective_history: Vec<T>,
    ) -> Result<Self> {
        let distances = assignments
            .iter()
            .enumerate()
            .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)).sqrt())
            .collect();
        if !centroids.is_finite() {
            return Err(Error::Input("non-finite centroid".into()));
        }
        Ok(Self {
            k: centroids.rows(),
            assignments,
            centroids,
            min_size,
            iterations_run,
            converged,
            objective_history,
            distances,
        })
    }

    /// Point indices in cluster `l`, ascending.
    pub fn members(&self, l: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == l).then_some(i))
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Final sum of squared distances.
    pub fn objective(&self) -> T {
        self.distances.iter().map(|&d| d * d).sum()
    }
}

/// k-means with every cluster holding at least `min_size` points.
pub fn constrained_kmeans<T: Real>(
    points: &Matrix<T>,
    k: usize,
    min_size: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel<T>> {
    KMeansConfig::new(k, min_size)
        .with_seed(seed)
        .with_max_iter(max_iter)
        .with_tol(tol)
        .fit(points)
}

/// Plain Lloyd iterations with k-means++ seeding. An empty cluster is
/// re-seeded with the point farthest from its current centroid.
pub fn lloyd_kmeans<T: Real>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel<T>> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(param_err!("cluster count {k} must be in 1..={n}"));
    }
    if max_iter == 0 {
        return Err(param_err!("max_iter must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let tol = T::lit(tol);
    let mut assignments = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations_run = 0;
    for _ in 0..max_iter {
        iterations_run += 1;
        let cost = cost_table(points, &centroids);
        assignments = cost.iter().map(|row| argmin(row)).collect();
        reseed_empty(&cost, &mut assignments, k);
        let updated = compute_centroids(points, &assignments, k, &centroids);
        let movement = (0..k)
            .map(|l| sq_dist(updated.row(l), centroids.row(l)).sqrt())
            .fold(T::zero(), T::max);
        centroids = updated;
        history.push(objective(points, &assignments, &centroids));
        if movement < tol {
            converged = true;
            break;
        }
    }
    let min_size = (0..k)
        .map(|l| assignments.iter().filter(|&&a| a == l).count())
        .min()
        .unwrap_or(0);
    ClusterModel::assemble(points, assignments, centroids, min_size, iterations_run, converged, history)
}

fn reseed_empty<T: Real>(cost: &[Vec<T>], assignments: &mut [usize], k: usize) {
    let mut taken = vec![false; assignments.len()];
    for l in 0..k {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        if counts[l] > 0 {
            continue;
        }
        let far = (0..assignments.len())
            .filter(|&i| !taken[i] && counts[assignments[i]] > 1)
            .fold(None, |best: Option<(usize, T)>, i| {
                let d = cost[i][assignments[i]];
                match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                }
            });
        if let Some((i, _)) = far {
            assignments[i] = l;
            taken[i] = true;
        }
    }
}

fn argmin<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (l, &c) in row.iter().enumerate() {
        if c < row[best] {
            best = l;
        }
    }
    best
}

fn kmeans_plus_plus<T: Real, R: Rng>(points: &Matrix<T>, k: usize, rng: &mut R) -> Matrix<T> {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<T> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().map(|v| v.as_f64()).sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, v) in d2.iter().enumerate() {
                acc += v.as_f64();
                if acc > target && v.as_f64() > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the running sum.
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| d2[i] > T::zero()).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen).expect("chosen rows in range")
}

fn cost_table<T: Real>(points: &Matrix<T>, centroids: &Matrix<T>) -> Vec<Vec<T>> {
    (0..points.rows())
        .map(|i| {
            (0..centroids.rows())
                .map(|l| sq_dist(points.row(i), centroids.row(l)))
                .collect()
        })
        .collect()
}

/// Member means; a cluster without members keeps its previous centroid.
fn compute_centroids<T: Real>(
    points: &Matrix<T>,
    assignments: &[usize],
    k: usize,
    previous: &Matrix<T>,
) -> Matrix<T> {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in assignments.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for l in 0..k {
        if counts[l] == 0 {
            sums.row_mut(l).copy_from_slice(previous.row(l));
        } else {
            let c = T::from_usize_lossy(counts[l]);
            for s in sums.row_mut(l) {
                *s /= c;
            }
        }
    }
    sums
}

fn objective<T: Real>(points: &Matrix<T>, assignments: &[usize], centroids: &Matrix<T>) -> T {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)))
        .sum()
}

const UNASSIGNED: usize = usize::MAX;

#[derive(Clone, Copy)]
enum Pred {
    None,
    /// Path enters the cluster layer with unassigned point `p`.
    Entry(usize),
    /// Point `q` moves from cluster `from` into this cluster.
    Move { from: usize, q: usize },
}

/// Minimum total cost assignment with `count[l] >= min_size` for every cluster.
///
/// `cost[i][l]` is the squared distance of point `i` to centroid `l`. Ties are
/// broken toward the lowest point index and then the lowest cluster index.
fn assign_min_cost_flow<T: Real>(cost: &[Vec<T>], k: usize, min_size: usize) -> Vec<usize> {
    let n = cost.len();
    let mut assign = vec![UNASSIGNED; n];
    let mut count = vec![0usize; k];
    let inf = T::infinity();

    for _ in 0..n {
        let mut dist = vec![inf; k];
        let mut pred = vec![Pred::None; k];
        for (p, row) in cost.iter().enumerate() {
            if assign[p] != UNASSIGNED {
                continue;
            }
            for l in 0..k {
                if row[l] < dist[l] {
                    dist[l] = row[l];
                    pred[l] = Pred::Entry(p);
                }
            }
        }

        // Cheapest single move between every ordered pair of clusters.
        let mut edge = vec![vec![(inf, UNASSIGNED); k]; k];
        for (q, row) in cost.iter().enumerate() {
            let from = assign[q];
            if from == UNASSIGNED {
                continue;
            }
            for to in 0..k {
                if to == from {
                    continue;
                }
                let c = row[to] - row[from];
                if c < edge[from][to].0 {
                    edge[from][to] = (c, q);
                }
            }
        }

        // Bellman-Ford over the cluster layer; the improvement margin keeps
        // rounding noise from creating predecessor cycles.
        for _ in 1..k {
            let mut changed = false;
            for from in 0..k {
                if dist[from] == inf {
                    continue;
                }
                for to in 0..k {
                    let (c, q) = edge[from][to];
                    if q == UNASSIGNED {
                        continue;
                    }
                    let cand = dist[from] + c;
                    let margin = T::lit(1e-12) * (T::one() + dist[to].abs().min(cand.abs()));
                    if cand < dist[to] - margin {
                        dist[to] = cand;
                        pred[to] = Pred::Move { from, q };
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let need_reserved = count.iter().any(|&c| c < min_size);
        let mut end = None;
        for l in 0..k {
            if need_reserved && count[l] >= min_size {
                continue;
            }
            if end.map_or(true, |e: usize| dist[l] < dist[e]) {
                end = Some(l);
            }
        }
        let end = end.expect("a terminal cluster always exists");

        let mut cur = end;
        let mut hops = 0;
        loop {
            match pred[cur] {
                Pred::Entry(p) => {
                    assign[p] = cur;
                    break;
                }
                Pred::Move { from, q } => {
                    assign[q] = cur;
                    cur = from;
                }
                Pred::None => unreachable!("every cluster is reachable from an unassigned point"),
            }
            hops += 1;
            assert!(hops <= k, "augmenting path revisits a cluster");
        }
        count[end] += 1;
    }
    assign
}

fn assign_greedy_repair<T: Real>(cost: &[Vec<T>], k: usize, min_size: usize) -> Vec<usize> {
    let mut assign: Vec<usize> = cost.iter().map(|row| argmin(row)).collect();
    let mut count = vec![0usize; k];
    for &a in &assign {
        count[a] += 1;
    }
    while let Some(target) = (0..k).find(|&l| count[l] < min_size) {
        let mut best: Option<(usize, T)> = None;
        for (q, row) in cost.iter().enumerate() {
            let from = assign[q];
            if from == target || count[from] <= min_size {
                continue;
            }
            let delta = row[target] - row[from];
            if best.map_or(true, |(_, b)| delta < b) {
                best = Some((q, delta));
            }
        }
        let (q, _) = best.expect("feasible instance always has a donor");
        count[assign[q]] -= 1;
        assign[q] = target;
        count[target] += 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Matrix<f64> {
        Matrix::from_rows(&[
            [0.0, 0.0],
            [10.0, 10.0],
            [0.5, 0.2],
            [10.3, 9.8],
            [0.1, 0.6],
            [9.7, 10.4],
            [0.4, 0.4],
            [10.1, 10.1],
        ])
        .unwrap()
    }

    /// Exhaustive minimum over all 2-partitions with both sides at least `min_size`.
    fn brute_force_two_partition(points: &Matrix<f64>, min_size: usize) -> (f64, Vec<usize>) {
        let n = points.rows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 0u32..(1 << n) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let ones = labels.iter().sum::<usize>();
            if ones < min_size || n - ones < min_size || labels[0] != 0 {
                continue;
            }
            let m = ClusterModel::from_assignments(points, labels.clone(), 2).unwrap();
            let obj = m.objective();
            if obj < best.0 {
                best = (obj, labels);
            }
        }
        best
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let pts = blobs();
        let m = constrained_kmeans(&pts, 1, 1, 0, 50, 1e-10).unwrap();
        assert!(m.assignments.iter().all(|&a| a == 0));
        for j in 0..2 {
            let mean: f64 = (0..8).map(|i| pts[(i, j)]).sum::<f64>() / 8.0;
            assert!((m.centroids[(0, j)] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_blobs_match_exhaustive_partition() {
        let pts = blobs();
        let m = constrained_kmeans(&pts, 2, 4, 3, 100, 1e-10).unwrap();
        let (best_obj, best_labels) = brute_force_two_partition(&pts, 4);
        let same = m.assignments == best_labels
            || m.assignments.iter().zip(&best_labels).all(|(a, b)| a != b);
        assert!(same, "{:?} vs {:?}", m.assignments, best_labels);
        assert!((m.objective() - best_obj).abs() < 1e-9);
        assert!(m.converged);
    }

    #[test]
    fn infeasible_and_invalid_parameters() {
        let pts = Matrix::<f64>::zeros(5, 2);
        assert!(matches!(constrained_kmeans(&pts, 3, 2, 0, 10, 1e-8), Err(Error::Constraint(_))));
        assert!(matches!(constrained_kmeans(&pts, 6, 1, 0, 10, 1e-8), Err(Error::Parameter(_))));
        assert!(matches!(constrained_kmeans(&pts, 0, 1, 0, 10, 1e-8), Err(Error::Parameter(_))));
        assert!(matches!(constrained_kmeans(&pts, 2, 1, 0, 0, 1e-8), Err(Error::Parameter(_))));
    }

    #[test]
    fn flow_assignment_beats_or_matches_greedy_and_respects_sizes() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 12 + trial % 5;
            let pts = Matrix::<f64>::random_normal(n, 3, &mut rng);
            let centroids = Matrix::<f64>::random_normal(3, 3, &mut rng);
            let cost = cost_table(&pts, &centroids);
            let flow = assign_min_cost_flow(&cost, 3, 4);
            let greedy = assign_greedy_repair(&cost, 3, 4);
            let total = |a: &[usize]| a.iter().enumerate().map(|(i, &l)| cost[i][l]).sum::<f64>();
            for a in [&flow, &greedy] {
                for l in 0..3 {
                    assert!(a.iter().filter(|&&x| x == l).count() >= 4);
                }
            }
            assert!(total(&flow) <= total(&greedy) + 1e-12);
        }
    }

    #[test]
    fn flow_assignment_is_optimal_on_small_instances() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let pts = Matrix::<f64>::random_normal(7, 2, &mut rng);
            let centroids = Matrix::<f64>::random_normal(3, 2, &mut rng);
            let cost = cost_table(&pts, &centroids);
            let flow = assign_min_cost_flow(&cost, 3, 2);
            let total = |a: &[usize]| a.iter().enumerate().map(|(i, &l)| cost[i][l]).sum::<f64>();
            // Enumerate all 3^7 labelings.
            let mut best = f64::INFINITY;
            for code in 0..3usize.pow(7) {
                let labels: Vec<usize> = (0..7).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
                if (0..3).all(|l| labels.iter().filter(|&&x| x == l).count() >= 2) {
                    best = best.min(total(&labels));
                }
            }
            assert!((total(&flow) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn lloyd_reseeds_empty_clusters() {
        let pts = Matrix::<f64>::from_rows(&[[0.0], [0.0], [0.0], [5.0]]).unwrap();
        let m = lloyd_kmeans(&pts, 3, 1, 20, 1e-10).unwrap();
        assert!(m.sizes().iter().all(|&s| s >= 1));
    }
}
