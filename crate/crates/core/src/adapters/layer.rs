use crate::adapters::config::AdapterConfig;
use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Gradients of `<upstream, forward(h)>`, one flat block per trainable
/// parameter block (same order as [`Adapter::params`]) plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real> {
    pub blocks: Vec<Vec<T>>,
    pub grad_h: Vec<T>,
}

/// Common surface of the adapter layers used by training and evaluation.
pub trait Adapter<T: Real> {
    fn config(&self) -> &AdapterConfig;

    fn frozen_weight(&self) -> &Matrix<T>;

    /// The adapter's additive contribution, without `W h`.
    fn delta(&self, h: &[T]) -> Result<Vec<T>>;

    fn backward(&self, h: &[T], upstream: &[T]) -> Result<Gradients<T>>;

    fn param_names(&self) -> Vec<String>;

    fn params(&self) -> Vec<&[T]>;

    fn params_mut(&mut self) -> Vec<&mut [T]>;

    /// Every tensor that training must leave untouched.
    fn frozen_blocks(&self) -> Vec<&[T]>;

    fn forward(&self, h: &[T]) -> Result<Vec<T>> {
        check_vec(h, self.config().d_in, "input")?;
        let mut out = self.frozen_weight().matvec(h)?;
        for (o, d) in out.iter_mut().zip(self.delta(h)?) {
            *o += d;
        }
        Ok(out)
    }

    fn trainable_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn check_vec<T: Real>(v: &[T], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(shape_err!("{what} has length {}, expected {len}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite values")));
    }
    Ok(())
}

pub(crate) fn check_shape<T: Real>(m: &Matrix<T>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(shape_err!("{what} is {}x{}, expected {rows}x{cols}", m.rows(), m.cols()));
    }
    Ok(())
}
