use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::theory::ensemble::{generate_ensemble, EnsembleConfig};
use crate::theory::pivots::{pivot_stability_study, PivotStudyReport};
use crate::theory::reconstruction::{verify_theorem1, ReconstructionReport};

/// Clustered-versus-global reconstruction over a run of ensemble seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionStudyConfig {
    pub ensemble: EnsembleConfig,
    /// Clusters used by the decomposition; defaults to the planted count when 0.
    pub k: usize,
    pub r_l: usize,
    pub r_g: usize,
    pub first_seed: u64,
    pub ensembles: usize,
}

impl Default for ReconstructionStudyConfig {
    fn default() -> Self {
        Self { ensemble: EnsembleConfig::default(), k: 0, r_l: 2, r_g: 2, first_seed: 0, ensembles: 10 }
    }
}

impl ReconstructionStudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err!("reconstruction study config: {e}"))
    }

    pub fn effective_k(&self) -> usize {
        if self.k == 0 {
            self.ensemble.k_true
        } else {
            self.k
        }
    }

    /// One report per seed, in seed order.
    pub fn run(&self) -> Result<Vec<ReconstructionReport>> {
        if self.ensembles == 0 {
            return Err(config_err!("ensembles must be at least 1"));
        }
        let k = self.effective_k();
        (0..self.ensembles as u64)
            .into_par_iter()
            .map(|i| {
                let ens = generate_ensemble::<f64>(&self.ensemble, self.first_seed + i)?;
                verify_theorem1(&ens, k, self.r_l, self.r_g)
            })
            .collect()
    }
}

/// Pivot stability study on one generated ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PivotStudyConfig {
    pub ensemble: EnsembleConfig,
    pub ensemble_seed: u64,
    /// Row and column pivots per CUR; defaults to `intra_rank` when 0.
    pub pivot_count: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PivotStudyConfig {
    fn default() -> Self {
        Self { ensemble: EnsembleConfig::default(), ensemble_seed: 0, pivot_count: 0, trials: 500, seed: 0 }
    }
}

impl PivotStudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err!("pivot study config: {e}"))
    }

    pub fn effective_pivot_count(&self) -> usize {
        if self.pivot_count == 0 {
            self.ensemble.intra_rank.max(1)
        } else {
            self.pivot_count
        }
    }

    pub fn run(&self) -> Result<PivotStudyReport> {
        let ens = generate_ensemble::<f64>(&self.ensemble, self.ensemble_seed)?;
        pivot_stability_study(&ens, self.effective_pivot_count(), self.trials, self.seed)
    }
}
