//! Row clustering of a frozen weight matrix and selection of frozen bases.

mod basis;
mod kmeans;
mod pivots;

pub use basis::{select_basis, BasisSet, BASIS_MAGIC, BASIS_VERSION};
pub use kmeans::{constrained_kmeans, lloyd_kmeans, AssignmentStrategy, ClusterModel, KMeansConfig};
pub use pivots::{build_pivot_distribution, PivotDistribution, DEFAULT_DISTANCE_FLOOR};
