//! Pseudoinverse, minimum-norm least squares and numerical rank.

use crate::error::{param_err, shape_err, Result};
use crate::linalg::matrix::Matrix;
use crate::linalg::svd::{svd, SvdResult};
use crate::scalar::Real;

/// Default relative rank tolerance: singular values at or below
/// `tol * sigma_max` are treated as zero.
pub fn default_rank_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::lit(64.0) * T::epsilon())
}

fn kept<T: Real>(s: &SvdResult<T>, tol: T) -> usize {
    let sigma_max = s.singular_values.first().copied().unwrap_or_else(T::zero);
    if sigma_max == T::zero() {
        return 0;
    }
    let cutoff = tol * sigma_max;
    s.singular_values.iter().take_while(|&&x| x > cutoff).count()
}

/// Moore-Penrose pseudoinverse, inverting singular values above `tol * sigma_max`.
pub fn pseudo_inverse<T: Real>(m: &Matrix<T>, tol: T) -> Result<Matrix<T>> {
    if !(tol > T::zero()) {
        return Err(param_err!("pseudoinverse tolerance must be positive, got {tol}"));
    }
    let s = svd(m);
    let r = kept(&s, tol);
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for k in 0..r {
        let inv = T::one() / s.singular_values[k];
        for i in 0..cols {
            let a = s.right_vectors[(i, k)] * inv;
            if a == T::zero() {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += a * s.left_vectors[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Count of singular values above `tol * sigma_max`; 0 for the zero matrix.
pub fn numerical_rank<T: Real>(m: &Matrix<T>, tol: T) -> Result<usize> {
    if !(tol > T::zero()) {
        return Err(param_err!("rank tolerance must be positive, got {tol}"));
    }
    Ok(kept(&svd(m), tol))
}

/// Solves `min_X ||X g - y||_F` for `g: r x n`, `y: m x n`, returning `X: m x r`.
///
/// Uses the pseudoinverse of `g`, so rank-deficient `g` yields the minimum-norm solution.
pub fn least_squares_right<T: Real>(g: &Matrix<T>, y: &Matrix<T>) -> Result<Matrix<T>> {
    if g.cols() != y.cols() {
        return Err(shape_err!(
            "least squares needs equal column counts: g is {}x{}, y is {}x{}",
            g.rows(),
            g.cols(),
            y.rows(),
            y.cols()
        ));
    }
    let pinv = pseudo_inverse(g, default_rank_tol())?;
    y.matmul(&pinv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix<f64> {
        let mut r = rng(seed);
        let a = Matrix::random_normal(rows, rank, &mut r);
        let b = Matrix::random_normal(rank, cols, &mut r);
        a.matmul(&b).unwrap()
    }

    #[test]
    fn pinv_simple_cases() {
        let i = Matrix::<f64>::identity(3);
        assert!(pseudo_inverse(&i, 1e-9).unwrap().max_abs_diff(&i).unwrap() < 1e-14);
        let d = Matrix::from_diag(&[2.0, 0.0]);
        let p = pseudo_inverse(&d, 1e-9).unwrap();
        assert!(p.max_abs_diff(&Matrix::from_diag(&[0.5, 0.0])).unwrap() < 1e-14);
    }

    #[test]
    fn pinv_inverts_full_rank_square() {
        let mut r = rng(21);
        let m = Matrix::<f64>::random_normal(6, 6, &mut r);
        let p = pseudo_inverse(&m, 1e-9).unwrap();
        let defect = p.matmul(&m).unwrap().sub(&Matrix::identity(6)).unwrap();
        assert!(defect.frobenius_norm() < 1e-8);
    }

    #[test]
    fn pinv_rejects_non_positive_tol() {
        assert!(pseudo_inverse(&Matrix::<f64>::identity(2), 0.0).is_err());
        assert!(numerical_rank(&Matrix::<f64>::identity(2), -1.0).is_err());
    }

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(numerical_rank(&Matrix::<f64>::zeros(4, 5), 1e-9).unwrap(), 0);
        let uv = Matrix::outer(&[1.0, 2.0, -1.0], &[0.5, 3.0]);
        assert_eq!(numerical_rank(&uv, 1e-9).unwrap(), 1);
    }

    #[test]
    fn rank_is_subadditive_on_example() {
        let a = low_rank(7, 6, 2, 1);
        let b = low_rank(7, 6, 3, 2);
        let sum = a.add(&b).unwrap();
        let ra = numerical_rank(&a, 1e-9).unwrap();
        let rb = numerical_rank(&b, 1e-9).unwrap();
        assert_eq!((ra, rb), (2, 3));
        assert!(numerical_rank(&sum, 1e-9).unwrap() <= 5);
    }

    #[test]
    fn least_squares_zero_and_exact_targets() {
        let mut r = rng(22);
        let g = Matrix::<f64>::random_normal(3, 8, &mut r);
        let x0 = least_squares_right(&g, &Matrix::zeros(4, 8)).unwrap();
        assert_eq!(x0.shape(), (4, 3));
        assert_eq!(x0.max_abs(), 0.0);
        let e = Matrix::random_normal(4, 3, &mut r);
        let y = e.matmul(&g).unwrap();
        let x = least_squares_right(&g, &y).unwrap();
        assert!(x.max_abs_diff(&e).unwrap() < 1e-9);
    }

    #[test]
    fn least_squares_residual_matches_projection_oracle() {
        // Rank-deficient g: the optimal residual is y minus its projection onto
        // the row space of g, computed independently from the SVD of g.
        let g = low_rank(4, 9, 2, 3);
        let mut r = rng(23);
        let y = Matrix::<f64>::random_normal(5, 9, &mut r);
        let x = least_squares_right(&g, &y).unwrap();
        let residual = x.matmul(&g).unwrap().sub(&y).unwrap().frobenius_norm();

        let s = svd(&g).truncate(2);
        let v = &s.right_vectors; // 9 x 2 orthonormal basis of row(g)
        let proj = y.matmul(v).unwrap().matmul(&v.transpose()).unwrap();
        let oracle = y.sub(&proj).unwrap().frobenius_norm();
        assert!((residual - oracle).abs() < 1e-8, "{residual} vs {oracle}");
    }

    #[test]
    fn least_squares_shape_error() {
        let g = Matrix::<f64>::zeros(2, 3);
        let y = Matrix::<f64>::zeros(2, 4);
        assert!(matches!(
            least_squares_right(&g, &y),
            Err(crate::Error::Shape(_))
        ));
    }
}
