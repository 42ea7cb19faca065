use serde::{Deserialize, Serialize};

use crate::cluster::kmeans::ClusterModel;
use crate::error::{param_err, Error, Result};
use crate::scalar::Real;

/// Default additive floor on distances when turning them into weights.
pub const DEFAULT_DISTANCE_FLOOR: f64 = 1e-6;

/// Sampling weights over candidate indices; weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PivotDistribution<T: Real> {
    pub members: Vec<usize>,
    pub weights: Vec<T>,
}

impl<T: Real> PivotDistribution<T> {
    /// Normalizes non-negative raw weights. All-zero input becomes uniform.
    pub fn from_raw(members: Vec<usize>, raw: Vec<T>) -> Result<Self> {
        if members.len() != raw.len() {
            return Err(param_err!("{} members but {} weights", members.len(), raw.len()));
        }
        if members.is_empty() {
            return Err(Error::Constraint("distribution over an empty set".into()));
        }
        if raw.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(param_err!("weights must be finite and non-negative"));
        }
        let total: T = raw.iter().copied().sum();
        let weights = if total > T::zero() {
            raw.iter().map(|&w| w / total).collect()
        } else {
            vec![T::one() / T::from_usize_lossy(raw.len()); raw.len()]
        };
        Ok(Self { members, weights })
    }
}

/// Weights over the members of `cluster_id`, proportional to
/// `1 / (distance to centroid + floor)`.
pub fn build_pivot_distribution<T: Real>(
    model: &ClusterModel<T>,
    cluster_id: usize,
    distance_floor: T,
) -> Result<PivotDistribution<T>> {
    if cluster_id >= model.k {
        return Err(param_err!("cluster {cluster_id} out of range for k = {}", model.k));
    }
    let members = model.members(cluster_id);
    if members.is_empty() {
        return Err(Error::Constraint(format!("cluster {cluster_id} is empty")));
    }
    let raw = members
        .iter()
        .map(|&i| T::one() / (model.distances[i] + distance_floor))
        .collect();
    PivotDistribution::from_raw(members, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn model_with_distances(distances: &[f64]) -> ClusterModel<f64> {
        // Points on a line at the given offsets from a centroid pinned to 0.
        let n = distances.len();
        let pts = Matrix::from_fn(n, 1, |i, _| distances[i]);
        let mut m = ClusterModel::from_assignments(&pts, vec![0; n], 1).unwrap();
        m.centroids[(0, 0)] = 0.0;
        m.distances = distances.iter().map(|d| d.abs()).collect();
        m
    }

    #[test]
    fn singleton_gets_all_mass() {
        let d = build_pivot_distribution(&model_with_distances(&[0.7]), 0, 1e-6).unwrap();
        assert_eq!(d.members, vec![0]);
        assert_eq!(d.weights, vec![1.0]);
    }

    #[test]
    fn equal_distances_are_uniform() {
        let d = build_pivot_distribution(&model_with_distances(&[1.0, -1.0]), 0, 1e-6).unwrap();
        assert!((d.weights[0] - 0.5).abs() < 1e-15 && (d.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_distance_dominates() {
        let d = build_pivot_distribution(&model_with_distances(&[0.0, 1.0]), 0, 1e-6).unwrap();
        // Direct evaluation: raw weights 1/1e-6 and 1/(1 + 1e-6).
        let (a, b) = (1.0 / 1e-6, 1.0 / (1.0 + 1e-6));
        assert!((d.weights[0] - a / (a + b)).abs() < 1e-15);
        assert!((d.weights[0] / d.weights[1] - 1e6 * (1.0 + 1e-6)).abs() < 1e-3);
        assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_cluster_id() {
        let m = model_with_distances(&[1.0]);
        assert!(build_pivot_distribution(&m, 3, 1e-6).is_err());
    }
}
