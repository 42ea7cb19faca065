//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Deterministic: no randomized sketching, fixed sweep order, and a sign
//! convention that makes the largest-magnitude entry of every left singular
//! vector positive (lowest index wins ties).

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::linalg::matrix::{dot, norm2, Matrix};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Thin SVD `M = left * diag(singular_values) * right^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SvdResult<T: Real> {
    /// `m x t`, orthonormal columns.
    pub left_vectors: Matrix<T>,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<T>,
    /// `n x t`, orthonormal columns.
    pub right_vectors: Matrix<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn rank_count(&self) -> usize {
        self.singular_values.len()
    }

    /// `left * diag(sigma) * right^T`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let (m, t) = self.left_vectors.shape();
        let n = self.right_vectors.rows();
        let mut out = Matrix::zeros(m, n);
        for k in 0..t {
            let s = self.singular_values[k];
            if s == T::zero() {
                continue;
            }
            for i in 0..m {
                let a = self.left_vectors[(i, k)] * s;
                if a == T::zero() {
                    continue;
                }
                let row = out.row_mut(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * self.right_vectors[(j, k)];
                }
            }
        }
        out
    }

    /// Keeps the leading `t` triplets.
    pub fn truncate(&self, t: usize) -> Self {
        let t = t.min(self.singular_values.len());
        let keep: Vec<usize> = (0..t).collect();
        Self {
            left_vectors: self
                .left_vectors
                .select_cols(&keep)
                .expect("leading columns in range"),
            singular_values: self.singular_values[..t].to_vec(),
            right_vectors: self
                .right_vectors
                .select_cols(&keep)
                .expect("leading columns in range"),
        }
    }

    /// `diag(sigma) * right^T` restricted to the leading `t` triplets (a `t x n` right factor).
    pub fn scaled_right_factor(&self, t: usize) -> Matrix<T> {
        let n = self.right_vectors.rows();
        Matrix::from_fn(t, n, |k, j| {
            self.singular_values[k] * self.right_vectors[(j, k)]
        })
    }
}

/// Full thin SVD with `min(rows, cols)` triplets.
pub fn svd<T: Real>(m: &Matrix<T>) -> SvdResult<T> {
    let (rows, cols) = m.shape();
    if rows >= cols {
        let (left, sigma, right) = jacobi_tall(m);
        finish(left, sigma, right)
    } else {
        let (right, sigma, left) = jacobi_tall(&m.transpose());
        finish(left, sigma, right)
    }
}

/// Best rank-`t` approximation factors (Eckart-Young).
pub fn truncated_svd<T: Real>(m: &Matrix<T>, t: usize) -> Result<SvdResult<T>> {
    let max = m.rows().min(m.cols());
    if t == 0 || t > max {
        return Err(param_err!(
            "truncation rank {t} outside 1..={max} for a {}x{} matrix",
            m.rows(),
            m.cols()
        ));
    }
    Ok(svd(m).truncate(t))
}

/// Singular values only, non-increasing.
pub fn singular_values<T: Real>(m: &Matrix<T>) -> Vec<T> {
    svd(m).singular_values
}

/// Column-wise Jacobi on a matrix with `rows >= cols`.
///
/// Returns `(U, sigma, V)` as column lists, with `U` columns normalized and
/// completed to an orthonormal set where `sigma` is negligible. Unsorted.
fn jacobi_tall<T: Real>(a: &Matrix<T>) -> (Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>) {
    let (m, n) = a.shape();
    let mut u: Vec<Vec<T>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let tol = T::jacobi_tol();
    let two = T::lit(2.0);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&u[p], &u[p]);
                let beta = dot(&u[q], &u[q]);
                let gamma = dot(&u[p], &u[q]);
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + T::one().hypot(zeta));
                let c = T::one() / T::one().hypot(t);
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<T> = u.iter().map(|c| norm2(c)).collect();
    let sigma_max = sigma.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let negligible = sigma_max * T::epsilon();
    let mut needs_completion = Vec::new();
    for (j, col) in u.iter_mut().enumerate() {
        let s = sigma[j];
        if s > negligible && s > T::min_positive_value() {
            for x in col.iter_mut() {
                *x /= s;
            }
        } else {
            needs_completion.push(j);
        }
    }
    if !needs_completion.is_empty() {
        let accepted: Vec<usize> = (0..n).filter(|j| !needs_completion.contains(j)).collect();
        let mut basis: Vec<Vec<T>> = accepted.iter().map(|&j| u[j].clone()).collect();
        for &j in &needs_completion {
            // The coordinate vector with the largest residual against the current
            // basis; its squared norm is at least (m - basis.len()) / m.
            let mut best: Option<(T, Vec<T>)> = None;
            for c in 0..m {
                let mut e = vec![T::zero(); m];
                e[c] = T::one();
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(b, &e);
                        for (x, &y) in e.iter_mut().zip(b) {
                            *x -= proj * y;
                        }
                    }
                }
                let norm = norm2(&e);
                if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                    best = Some((norm, e));
                }
            }
            let (norm, mut fresh) = best.expect("at least one coordinate");
            for x in fresh.iter_mut() {
                *x /= norm;
            }
            basis.push(fresh.clone());
            u[j] = fresh;
        }
    }
    (u, sigma, v)
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn finish<T: Real>(left: Vec<Vec<T>>, sigma: Vec<T>, right: Vec<Vec<T>>) -> SvdResult<T> {
    let t = sigma.len();
    let mut order: Vec<usize> = (0..t).collect();
    // Stable sort keeps the lowest original index first among equal values.
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite singular values"));
    let m = left.first().map_or(0, Vec::len);
    let n = right.first().map_or(0, Vec::len);
    let mut left_vectors = Matrix::zeros(m, t);
    let mut right_vectors = Matrix::zeros(n, t);
    let mut singular_values = Vec::with_capacity(t);
    for (k, &j) in order.iter().enumerate() {
        let lead = left[j]
            .iter()
            .enumerate()
            .fold((0usize, T::zero()), |(bi, bv), (i, &x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        let flip = m > 0 && left[j][lead] < T::zero();
        let sgn = if flip { -T::one() } else { T::one() };
        for i in 0..m {
            left_vectors[(i, k)] = sgn * left[j][i];
        }
        for i in 0..n {
            right_vectors[(i, k)] = sgn * right[j][i];
        }
        singular_values.push(sigma[j]);
    }
    SvdResult {
        left_vectors,
        singular_values,
        right_vectors,
    }
}
