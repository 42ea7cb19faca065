use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapters::config::AdapterConfig;
use crate::adapters::layer::{check_shape, check_vec, Adapter, Gradients};
use crate::adapters::lora::random_down_projection;
use crate::error::{shape_err, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Expert<T: Real> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

/// `k` LoRA experts mixed by a dense softmax gate: `u = W h + (alpha / r) Σ p_i B_i A_i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeLoraLayer<T: Real> {
    pub w: Arc<Matrix<T>>,
    pub experts: Vec<Expert<T>>,
    /// `k x d_in` gate; mixture weights are `softmax(gate h)`.
    pub gate: Matrix<T>,
    pub config: AdapterConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeLoraGrads<T: Real> {
    pub grad_experts: Vec<Expert<T>>,
    pub grad_gate: Matrix<T>,
    pub grad_h: Vec<T>,
}

/// Random `A_i`, zero `B_i` and a zero gate.
pub fn build_moelora<T: Real>(
    w: impl Into<Arc<Matrix<T>>>,
    r: usize,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<MoeLoraLayer<T>> {
    let w = w.into();
    let config = AdapterConfig::moelora(w.cols(), w.rows(), r, k, alpha);
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let experts = (0..k)
        .map(|_| Expert {
            a: random_down_projection(r, w.cols(), &mut rng),
            b: Matrix::zeros(w.rows(), r),
        })
        .collect();
    let gate = Matrix::zeros(k, w.cols());
    Ok(MoeLoraLayer { w, experts, gate, config })
}

pub(crate) fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let total: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / total).collect()
}

impl<T: Real> MoeLoraLayer<T> {
    pub fn from_parts(
        w: impl Into<Arc<Matrix<T>>>,
        experts: Vec<Expert<T>>,
        gate: Matrix<T>,
        config: AdapterConfig,
    ) -> Result<Self> {
        let w = w.into();
        config.validate()?;
        check_shape(&w, config.d_out, config.d_in, "frozen weight")?;
        if experts.len() != config.k {
            return Err(shape_err!("{} experts, expected {}", experts.len(), config.k));
        }
        for e in &experts {
            check_shape(&e.a, config.r, config.d_in, "expert A")?;
            check_shape(&e.b, config.d_out, config.r, "expert B")?;
        }
        check_shape(&gate, config.k, config.d_in, "gate")?;
        Ok(Self { w, experts, gate, config })
    }

    fn scale(&self) -> T {
        T::lit(self.config.scale())
    }

    pub fn gate_weights(&self, h: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.gate.matvec(h)?))
    }

    /// Per-expert unscaled outputs `B_i A_i h` and their inner codes `A_i h`.
    fn expert_outputs(&self, h: &[T]) -> Result<Vec<(Vec<T>, Vec<T>)>> {
        self.experts
            .iter()
            .map(|e| {
                let x = e.a.matvec(h)?;
                let y = e.b.matvec(&x)?;
                Ok((x, y))
            })
            .collect()
    }

    pub fn grads(&self, h: &[T], upstream: &[T]) -> Result<MoeLoraGrads<T>> {
        check_vec(h, self.config.d_in, "input")?;
        check_vec(upstream, self.config.d_out, "upstream")?;
        let c = self.scale();
        let p = self.gate_weights(h)?;
        let outs = self.expert_outputs(h)?;
        let ge: Vec<T> = outs.iter().map(|(_, y)| dot(upstream, y)).collect();
        let mean: T = p.iter().zip(&ge).map(|(&pi, &g)| pi * g).sum();
        let dz: Vec<T> = p.iter().zip(&ge).map(|(&pi, &g)| c * pi * (g - mean)).collect();
        let mut grad_h = self.w.t_matvec(upstream)?;
        for (gh, v) in grad_h.iter_mut().zip(self.gate.t_matvec(&dz)?) {
            *gh += v;
        }
        let mut grad_experts = Vec::with_capacity(self.experts.len());
        for ((e, (x, _)), &pi) in self.experts.iter().zip(&outs).zip(&p) {
            let w = c * pi;
            let bt_g: Vec<T> = e.b.t_matvec(upstream)?.into_iter().map(|v| v * w).collect();
            for (gh, v) in grad_h.iter_mut().zip(e.a.t_matvec(&bt_g)?) {
                *gh += v;
            }
            grad_experts.push(Expert {
                a: Matrix::outer(&bt_g, h),
                b: Matrix::outer(upstream, x).scale(w),
            });
        }
        Ok(MoeLoraGrads {
            grad_experts,
            grad_gate: Matrix::outer(&dz, h),
            grad_h,
        })
    }
}

impl<T: Real> Adapter<T> for MoeLoraLayer<T> {
    fn config(&self) -> &AdapterConfig {
        &self.config
    }

    fn frozen_weight(&self) -> &Matrix<T> {
        &self.w
    }

    fn delta(&self, h: &[T]) -> Result<Vec<T>> {
        check_vec(h, self.config.d_in, "input")?;
        let c = self.scale();
        let p = self.gate_weights(h)?;
        let mut out = vec![T::zero(); self.config.d_out];
        for ((_, y), &pi) in self.expert_outputs(h)?.iter().zip(&p) {
            for (o, &v) in out.iter_mut().zip(y) {
                *o += c * pi * v;
            }
        }
        Ok(out)
    }

    fn backward(&self, h: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        let g = self.grads(h, upstream)?;
        let mut blocks = vec![g.grad_gate.into_vec()];
        for e in g.grad_experts {
            blocks.push(e.a.into_vec());
            blocks.push(e.b.into_vec());
        }
        Ok(Gradients { blocks, grad_h: g.grad_h })
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["gate".to_string()];
        for i in 0..self.experts.len() {
            names.push(format!("expert{i}.a"));
            names.push(format!("expert{i}.b"));
        }
        names
    }

    fn params(&self) -> Vec<&[T]> {
        let mut out = vec![self.gate.as_slice()];
        for e in &self.experts {
            out.push(e.a.as_slice());
            out.push(e.b.as_slice());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![self.gate.as_mut_slice()];
        for e in &mut self.experts {
            out.push(e.a.as_mut_slice());
            out.push(e.b.as_mut_slice());
        }
        out
    }

    fn frozen_blocks(&self) -> Vec<&[T]> {
        vec![self.w.as_slice()]
    }
}
