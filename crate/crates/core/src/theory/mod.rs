//! Planted multi-task ensembles and Monte-Carlo checks of cluster-aware
//! reconstruction and pivot selection.

mod config;
mod ensemble;
mod pivots;
mod reconstruction;

pub use config::{PivotStudyConfig, ReconstructionStudyConfig};
pub use ensemble::{generate_ensemble, EnsembleConfig, RareCluster, TaskEnsemble};
pub use pivots::{
    bootstrap_mean_ci, pivot_stability_study, PivotStudyReport, TrialOutcome, BAD_PIVOT_FACTOR,
    BOOTSTRAP_RESAMPLES,
};
pub use reconstruction::{
    cluster_low_rank_decompose, cluster_tasks, global_low_rank_decompose, reconstruction_gap,
    verify_theorem1, DecompositionModel, ReconstructionReport, COMPARISON_SLACK,
};
