use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain SGD or Adam (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`) over flat blocks.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, block_sizes: &[usize]) -> Self {
        let zeros = || block_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self { kind, lr, step: 0, m: zeros(), v: zeros() }
    }

    pub fn apply<T: Real>(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>]) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = T::lit(self.lr);
                for (p, g) in params.into_iter().zip(grads) {
                    for (x, &d) in p.iter_mut().zip(g) {
                        *x -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for (b, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    for (c, (x, &d)) in p.iter_mut().zip(g).enumerate() {
                        let d = d.as_f64();
                        let m = &mut self.m[b][c];
                        let v = &mut self.v[b][c];
                        *m = BETA1 * *m + (1.0 - BETA1) * d;
                        *v = BETA2 * *v + (1.0 - BETA2) * d * d;
                        *x -= T::lit(self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS));
                    }
                }
            }
        }
    }
}
