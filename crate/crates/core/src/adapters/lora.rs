use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adapters::config::AdapterConfig;
use crate::adapters::layer::{check_shape, check_vec, Adapter, Gradients};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// `u = W h + (alpha / r) B A h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer<T: Real> {
    pub w: Arc<Matrix<T>>,
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub config: AdapterConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads<T: Real> {
    pub grad_a: Matrix<T>,
    pub grad_b: Matrix<T>,
    pub grad_h: Vec<T>,
}

/// Gaussian `r x d_in` factor with variance `1 / d_in`.
pub(crate) fn random_down_projection<T: Real>(r: usize, d_in: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("positive std");
    Matrix::from_fn(r, d_in, |_, _| T::lit(normal.sample(rng)))
}

/// LoRA on `w` with a random `A` and zero `B`.
pub fn build_lora<T: Real>(w: impl Into<Arc<Matrix<T>>>, r: usize, alpha: f64, seed: u64) -> Result<LoraLayer<T>> {
    let w = w.into();
    let config = AdapterConfig::lora(w.cols(), w.rows(), r, alpha);
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_down_projection(r, w.cols(), &mut rng);
    let b = Matrix::zeros(w.rows(), r);
    Ok(LoraLayer { w, a, b, config })
}

impl<T: Real> LoraLayer<T> {
    pub fn from_parts(w: impl Into<Arc<Matrix<T>>>, a: Matrix<T>, b: Matrix<T>, config: AdapterConfig) -> Result<Self> {
        let w = w.into();
        config.validate()?;
        check_shape(&w, config.d_out, config.d_in, "frozen weight")?;
        check_shape(&a, config.r, config.d_in, "A")?;
        check_shape(&b, config.d_out, config.r, "B")?;
        Ok(Self { w, a, b, config })
    }

    fn scale(&self) -> T {
        T::lit(self.config.scale())
    }

    /// `(alpha / r) B A`.
    pub fn delta_weight(&self) -> Result<Matrix<T>> {
        Ok(self.b.matmul(&self.a)?.scale(self.scale()))
    }

    pub fn merged_weight(&self) -> Result<Matrix<T>> {
        self.w.add(&self.delta_weight()?)
    }

    pub fn grads(&self, h: &[T], upstream: &[T]) -> Result<LoraGrads<T>> {
        check_vec(h, self.config.d_in, "input")?;
        check_vec(upstream, self.config.d_out, "upstream")?;
        let c = self.scale();
        let x = self.a.matvec(h)?;
        let bt_g: Vec<T> = self.b.t_matvec(upstream)?.into_iter().map(|v| v * c).collect();
        let grad_b = Matrix::outer(upstream, &x).scale(c);
        let grad_a = Matrix::outer(&bt_g, h);
        let mut grad_h = self.w.t_matvec(upstream)?;
        for (gh, v) in grad_h.iter_mut().zip(self.a.t_matvec(&bt_g)?) {
            *gh += v;
        }
        Ok(LoraGrads { grad_a, grad_b, grad_h })
    }
}

impl<T: Real> Adapter<T> for LoraLayer<T> {
    fn config(&self) -> &AdapterConfig {
        &self.config
    }

    fn frozen_weight(&self) -> &Matrix<T> {
        &self.w
    }

    fn delta(&self, h: &[T]) -> Result<Vec<T>> {
        check_vec(h, self.config.d_in, "input")?;
        let c = self.scale();
        Ok(self.b.matvec(&self.a.matvec(h)?)?.into_iter().map(|v| v * c).collect())
    }

    fn backward(&self, h: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        let g = self.grads(h, upstream)?;
        Ok(Gradients {
            blocks: vec![g.grad_a.into_vec(), g.grad_b.into_vec()],
            grad_h: g.grad_h,
        })
    }

    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn params(&self) -> Vec<&[T]> {
        vec![self.a.as_slice(), self.b.as_slice()]
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.a.as_mut_slice(), self.b.as_mut_slice()]
    }

    fn frozen_blocks(&self) -> Vec<&[T]> {
        vec![self.w.as_slice()]
    }
}
