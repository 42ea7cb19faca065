use std::sync::Arc;

use crate::adapters::config::AdapterConfig;
use crate::adapters::layer::{check_shape, check_vec, Adapter, Gradients};
use crate::cluster::{constrained_kmeans, select_basis, BasisSet};
use crate::error::{shape_err, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-8;

/// Frozen row bases `A_i` taken from `W`, one shared trainable `B` applied
/// chunk-wise to each `A_i h`, and a router vector `T`:
///
/// `u = W h + (alpha / r) Σ_i (T · A_i h) concat_j(B (A_i h)_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdLoraLayer<T: Real> {
    pub w: Arc<Matrix<T>>,
    pub basis: BasisSet<T>,
    /// `(d_out / s) x (r / s)`, shared by every chunk and basis.
    pub b_shared: Matrix<T>,
    pub router_t: Vec<T>,
    pub config: AdapterConfig,
    /// Treat the mixture weights as constants: `T` is not trained and no
    /// gradient flows to `h` through them.
    pub detach_router: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdLoraGrads<T: Real> {
    pub grad_b: Matrix<T>,
    pub grad_t: Vec<T>,
    pub grad_h: Vec<T>,
}

/// Clusters the rows of `w` into `k` groups of at least `r` rows, takes the
/// `r` rows nearest each centroid as bases, and starts from `B = 0`, `T = 1`
/// with unit scale (`alpha = r`).
pub fn build_idlora<T: Real>(
    w: impl Into<Arc<Matrix<T>>>,
    k: usize,
    r: usize,
    s: usize,
    seed: u64,
) -> Result<IdLoraLayer<T>> {
    let w = w.into();
    let config = AdapterConfig::idlora(w.cols(), w.rows(), r, k, s, r as f64);
    config.validate()?;
    let model = constrained_kmeans(&w, k, r, seed, KMEANS_MAX_ITER, KMEANS_TOL)?;
    let basis = select_basis(&w, &model, r)?;
    let b_shared = Matrix::zeros(w.rows() / s, r / s);
    let router_t = vec![T::one(); r];
    IdLoraLayer::from_parts(w, basis, b_shared, router_t, config)
}

impl<T: Real> IdLoraLayer<T> {
    pub fn from_parts(
        w: impl Into<Arc<Matrix<T>>>,
        basis: BasisSet<T>,
        b_shared: Matrix<T>,
        router_t: Vec<T>,
        config: AdapterConfig,
    ) -> Result<Self> {
        let w = w.into();
        config.validate()?;
        check_shape(&w, config.d_out, config.d_in, "frozen weight")?;
        if basis.k != config.k || basis.r != config.r || basis.source_cols != config.d_in {
            return Err(shape_err!(
                "basis set (k={}, r={}, width {}) does not match the configuration",
                basis.k,
                basis.r,
                basis.source_cols
            ));
        }
        for (idx, a) in basis.row_indices.iter().zip(&basis.bases) {
            for (pos, &i) in idx.iter().enumerate() {
                if i >= w.rows() || a.row(pos) != w.row(i) {
                    return Err(Error::Input(format!("basis row {pos} is not row {i} of the frozen weight")));
                }
            }
        }
        check_shape(&b_shared, config.d_out / config.s, config.r / config.s, "shared B")?;
        check_vec(&router_t, config.r, "router")?;
        Ok(Self { w, basis, b_shared, router_t, config, detach_router: false })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.config.alpha = alpha;
        self.config.validate()?;
        Ok(self)
    }

    fn scale(&self) -> T {
        T::lit(self.config.scale())
    }

    fn chunk_rows(&self) -> (usize, usize) {
        (self.config.d_out / self.config.s, self.config.r / self.config.s)
    }

    /// Router outputs `T · A_i h`, one per basis.
    pub fn mixture_weights(&self, h: &[T]) -> Result<Vec<T>> {
        check_vec(h, self.config.d_in, "input")?;
        self.basis
            .bases
            .iter()
            .map(|a| Ok(dot(&self.router_t, &a.matvec(h)?)))
            .collect()
    }

    /// Codes `A_i h` and the mixture `Σ_i (T · A_i h) A_i h`.
    fn codes(&self, h: &[T]) -> Result<(Vec<Vec<T>>, Vec<T>, Vec<T>)> {
        let xs = self
            .basis
            .bases
            .iter()
            .map(|a| a.matvec(h))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<T> = xs.iter().map(|x| dot(&self.router_t, x)).collect();
        let mut mix = vec![T::zero(); self.config.r];
        for (x, &wt) in xs.iter().zip(&weights) {
            for (m, &v) in mix.iter_mut().zip(x) {
                *m += wt * v;
            }
        }
        Ok((xs, weights, mix))
    }

    /// `concat_j(B v_j)` for a length-`r` vector split into `s` chunks.
    fn apply_blocks(&self, v: &[T]) -> Result<Vec<T>> {
        let (_, rs) = self.chunk_rows();
        let mut out = Vec::with_capacity(self.config.d_out);
        for chunk in v.chunks(rs) {
            out.extend(self.b_shared.matvec(chunk)?);
        }
        Ok(out)
    }

    /// `concat_j(Bᵀ g_j)` for a length-`d_out` vector split into `s` chunks.
    fn apply_blocks_t(&self, g: &[T]) -> Result<Vec<T>> {
        let (ds, _) = self.chunk_rows();
        let mut out = Vec::with_capacity(self.config.r);
        for chunk in g.chunks(ds) {
            out.extend(self.b_shared.t_matvec(chunk)?);
        }
        Ok(out)
    }

    pub fn grads(&self, h: &[T], upstream: &[T]) -> Result<IdLoraGrads<T>> {
        check_vec(h, self.config.d_in, "input")?;
        check_vec(upstream, self.config.d_out, "upstream")?;
        let c = self.scale();
        let (ds, rs) = self.chunk_rows();
        let (xs, weights, mix) = self.codes(h)?;
        let z = self.apply_blocks_t(upstream)?;

        let mut grad_b = Matrix::zeros(ds, rs);
        for (g, x) in upstream.chunks(ds).zip(mix.chunks(rs)) {
            grad_b.add_scaled(c, &Matrix::outer(g, x))?;
        }
        let mut grad_t = vec![T::zero(); self.config.r];
        let mut grad_h = self.w.t_matvec(upstream)?;
        for ((a, x), &wt) in self.basis.bases.iter().zip(&xs).zip(&weights) {
            let mut v: Vec<T> = z.iter().map(|&zi| c * wt * zi).collect();
            if !self.detach_router {
                let gy = c * dot(&z, x);
                for ((gt, vi), (&xi, &ti)) in grad_t.iter_mut().zip(v.iter_mut()).zip(x.iter().zip(&self.router_t)) {
                    *gt += gy * xi;
                    *vi += gy * ti;
                }
            }
            for (gh, u) in grad_h.iter_mut().zip(a.t_matvec(&v)?) {
                *gh += u;
            }
        }
        Ok(IdLoraGrads { grad_b, grad_t, grad_h })
    }

    /// The map `h -> Σ_i weights_i concat_j(B (A_i h)_j)` as a `d_out x d_in`
    /// matrix, with the mixture weights held fixed and no `alpha / r` factor.
    pub fn assemble_operator(&self, weights: &[T]) -> Result<Matrix<T>> {
        if weights.len() != self.config.k {
            return Err(shape_err!("{} weights for {} bases", weights.len(), self.config.k));
        }
        let mut mixed = Matrix::zeros(self.config.r, self.config.d_in);
        for (a, &wt) in self.basis.bases.iter().zip(weights) {
            mixed.add_scaled(wt, a)?;
        }
        let (_, rs) = self.chunk_rows();
        let blocks = (0..self.config.s)
            .map(|j| self.b_shared.matmul(&mixed.row_block(j * rs, rs)?))
            .collect::<Result<Vec<_>>>()?;
        Matrix::vstack(&blocks.iter().collect::<Vec<_>>())
    }
}

impl<T: Real> Adapter<T> for IdLoraLayer<T> {
    fn config(&self) -> &AdapterConfig {
        &self.config
    }

    fn frozen_weight(&self) -> &Matrix<T> {
        &self.w
    }

    fn delta(&self, h: &[T]) -> Result<Vec<T>> {
        check_vec(h, self.config.d_in, "input")?;
        let c = self.scale();
        let (_, _, mix) = self.codes(h)?;
        Ok(self.apply_blocks(&mix)?.into_iter().map(|v| v * c).collect())
    }

    fn backward(&self, h: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        let g = self.grads(h, upstream)?;
        let mut blocks = vec![g.grad_b.into_vec()];
        if !self.detach_router {
            blocks.push(g.grad_t);
        }
        Ok(Gradients { blocks, grad_h: g.grad_h })
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["b_shared".to_string()];
        if !self.detach_router {
            names.push("router_t".into());
        }
        names
    }

    fn params(&self) -> Vec<&[T]> {
        let mut out = vec![self.b_shared.as_slice()];
        if !self.detach_router {
            out.push(&self.router_t);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![self.b_shared.as_mut_slice()];
        if !self.detach_router {
            out.push(&mut self.router_t);
        }
        out
    }

    fn frozen_blocks(&self) -> Vec<&[T]> {
        let mut out = vec![self.w.as_slice()];
        out.extend(self.basis.bases.iter().map(Matrix::as_slice));
        if self.detach_router {
            out.push(&self.router_t);
        }
        out
    }
}
