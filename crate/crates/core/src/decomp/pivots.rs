use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{build_pivot_distribution, ClusterModel, DEFAULT_DISTANCE_FLOOR};
use crate::error::{param_err, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rows,
    Cols,
}

/// Distinct indices along one axis of a matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotSet {
    pub indices: Vec<usize>,
    pub axis: Axis,
}

impl PivotSet {
    pub fn new(indices: Vec<usize>, axis: Axis) -> Result<Self> {
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(param_err!("pivot indices must be distinct"));
        }
        Ok(Self { indices, axis })
    }

    pub fn rows(indices: Vec<usize>) -> Result<Self> {
        Self::new(indices, Axis::Rows)
    }

    pub fn cols(indices: Vec<usize>) -> Result<Self> {
        Self::new(indices, Axis::Cols)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    pub(crate) fn check_bounds(&self, bound: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= bound) {
            Some(i) => Err(Error::Index(format!("pivot {i} out of range for {bound} {:?}", self.axis))),
            None => Ok(()),
        }
    }
}

/// Uniform sample of `count` of `0..n` without replacement, sorted ascending.
pub fn sample_pivots_uniform(n: usize, count: usize, seed: u64) -> Result<PivotSet> {
    if count > n {
        return Err(param_err!("cannot draw {count} pivots from {n} indices"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = index::sample(&mut rng, n, count).into_vec();
    indices.sort_unstable();
    Ok(PivotSet { indices, axis: Axis::Rows })
}

/// Sequential draws without replacement; each draw picks among the remaining
/// positions with probability proportional to its weight. Returns positions
/// into `weights` in draw order.
pub fn weighted_sample_without_replacement<T: Real, R: Rng + ?Sized>(
    weights: &[T],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if count > weights.len() {
        return Err(param_err!("cannot draw {count} items from {}", weights.len()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(param_err!("weights must be finite and non-negative"));
    }
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut drawn = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = remaining.iter().map(|&i| weights[i].as_f64()).sum();
        let pos = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = remaining.len() - 1;
            for (p, &i) in remaining.iter().enumerate() {
                acc += weights[i].as_f64();
                if target < acc {
                    pick = p;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..remaining.len())
        };
        drawn.push(remaining.remove(pos));
    }
    Ok(drawn)
}

/// Rows of one cluster drawn from its centroid-distance distribution, sorted ascending.
pub fn sample_pivots_local<T: Real>(
    model: &ClusterModel<T>,
    cluster_id: usize,
    count: usize,
    seed: u64,
) -> Result<PivotSet> {
    let dist = build_pivot_distribution(model, cluster_id, T::lit(DEFAULT_DISTANCE_FLOOR))?;
    if dist.members.len() < count {
        return Err(Error::Capacity(format!(
            "cluster {cluster_id} has {} members, fewer than {count} pivots",
            dist.members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = weighted_sample_without_replacement(&dist.weights, count, &mut rng)?;
    let mut indices: Vec<usize> = picks.into_iter().map(|p| dist.members[p]).collect();
    indices.sort_unstable();
    Ok(PivotSet { indices, axis: Axis::Rows })
}
