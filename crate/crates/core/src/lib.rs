//! Clustered interpolative low-rank adaptation.
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases. `f64` is the default
//! throughout the command-line tool and the on-disk formats.

pub mod adapters;
pub mod cluster;
pub mod decomp;
pub mod error;
pub mod linalg;
pub mod scalar;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

pub use adapters::{
    build_idlora, build_lora, build_moelora, count_trainable, deserialize_adapter, serialize_adapter, Adapter,
    AdapterConfig, AnyAdapter, ArchitectureDescriptor, Method,
};
pub use cluster::{constrained_kmeans, select_basis, BasisSet, ClusterModel};
pub use decomp::{cur_decompose, mid_fit, PivotSet};
pub use linalg::{least_squares_right, numerical_rank, pseudo_inverse, truncated_svd, Matrix};

pub type Mat = linalg::Matrix<f64>;
pub type Mat32 = linalg::Matrix<f32>;
pub type Svd = linalg::SvdResult<f64>;
pub type Clusters = cluster::ClusterModel<f64>;
pub type Bases = cluster::BasisSet<f64>;
pub type IdLora = adapters::IdLoraLayer<f64>;
pub type IdLora32 = adapters::IdLoraLayer<f32>;
pub type Lora = adapters::LoraLayer<f64>;
pub type MoeLora = adapters::MoeLoraLayer<f64>;
pub type Ensemble = theory::TaskEnsemble<f64>;
pub type TaskSet = train::SyntheticTaskSet<f64>;
