use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::Adapter;
use crate::error::{config_err, shape_err, Error, Result};
use crate::scalar::Real;
use crate::train::data::SyntheticTaskSet;
use crate::train::optim::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Samples per step; 0 means the whole data set.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-2, epochs: 50, batch_size: 0, optimizer: OptimizerKind::Adam, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.epochs == 0 {
            return Err(config_err!("epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub seed: u64,
    pub trainable_params: usize,
    /// Mean task MSE before training, then after every step.
    pub history: Vec<f64>,
    pub steps: usize,
    pub final_loss: f64,
}

/// One row of the loss-history CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub seed: u64,
    pub method: String,
    pub trainable_params: usize,
}

impl TrainReport {
    pub fn rows(&self) -> Vec<HistoryRow> {
        self.history
            .iter()
            .enumerate()
            .map(|(step, &loss)| HistoryRow {
                step,
                loss,
                seed: self.seed,
                method: self.method.clone(),
                trainable_params: self.trainable_params,
            })
            .collect()
    }
}

fn check_data<T: Real, A: Adapter<T>>(layer: &A, data: &SyntheticTaskSet<T>) -> Result<()> {
    let cfg = layer.config();
    for t in &data.tasks {
        if t.inputs.cols() != cfg.d_in || t.targets.cols() != cfg.d_out || t.inputs.rows() != t.targets.rows() {
            return Err(shape_err!(
                "task {} has {}x{} inputs and {}x{} targets for a {}x{} layer",
                t.task_id,
                t.inputs.rows(),
                t.inputs.cols(),
                t.targets.rows(),
                t.targets.cols(),
                cfg.d_out,
                cfg.d_in
            ));
        }
    }
    Ok(())
}

/// Mean over tasks of each task's mean squared output residual.
pub fn evaluate<T: Real, A: Adapter<T> + Sync>(layer: &A, data: &SyntheticTaskSet<T>) -> Result<EvalReport> {
    check_data(layer, data)?;
    let per_task = data
        .tasks
        .par_iter()
        .map(|t| {
            let mut sq = 0.0;
            for n in 0..t.inputs.rows() {
                let u = layer.forward(t.inputs.row(n))?;
                sq += u.iter().zip(t.targets.row(n)).map(|(a, b)| (*a - *b).as_f64().powi(2)).sum::<f64>();
            }
            Ok(sq / (t.inputs.rows() * t.targets.cols()).max(1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = if per_task.is_empty() { 0.0 } else { per_task.iter().sum::<f64>() / per_task.len() as f64 };
    Ok(EvalReport { per_task, mean })
}

/// Minimizes the mean squared error over every (task, sample) pair; only the
/// trainable blocks of `layer` change.
pub fn train<T: Real, A: Adapter<T> + Sync>(
    layer: &mut A,
    data: &SyntheticTaskSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(layer, data)?;
    let samples: Vec<(usize, usize)> = data
        .tasks
        .iter()
        .enumerate()
        .flat_map(|(t, task)| (0..task.inputs.rows()).map(move |n| (t, n)))
        .collect();
    if samples.is_empty() {
        return Err(config_err!("training data has no samples"));
    }
    let batch = if cfg.batch_size == 0 { samples.len() } else { cfg.batch_size.min(samples.len()) };
    let d_out = layer.config().d_out;
    let sizes: Vec<usize> = layer.params().iter().map(|p| p.len()).collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = samples;
    let mut history = vec![evaluate(layer, data)?.mean];
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let scale = T::lit(2.0 / (chunk.len() * d_out) as f64);
            let mut grads: Vec<Vec<T>> = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
            for &(t, n) in chunk {
                let task = &data.tasks[t];
                let h = task.inputs.row(n);
                let u = layer.forward(h)?;
                let g: Vec<T> = u.iter().zip(task.targets.row(n)).map(|(&a, &b)| scale * (a - b)).collect();
                for (acc, blk) in grads.iter_mut().zip(layer.backward(h, &g)?.blocks) {
                    for (a, v) in acc.iter_mut().zip(blk) {
                        *a += v;
                    }
                }
            }
            opt.apply(layer.params_mut(), &grads);
            step += 1;
            let loss = evaluate(layer, data)?.mean;
            if !loss.is_finite() {
                return Err(Error::Training { step, reason: format!("loss became {loss}") });
            }
            history.push(loss);
        }
    }
    Ok(TrainReport {
        method: layer.config().method.to_string(),
        seed: cfg.seed,
        trainable_params: layer.trainable_count(),
        final_loss: *history.last().expect("initial loss recorded"),
        history,
        steps: step,
    })
}
