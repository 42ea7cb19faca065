use serde::{Deserialize, Serialize};

use crate::decomp::pivots::{Axis, PivotSet};
use crate::error::{shape_err, Result};
use crate::linalg::{default_rank_tol, least_squares_right, pseudo_inverse, Matrix};
use crate::scalar::Real;

/// Row-skeleton fit `coefficient * W[S,:] ≈ target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MidResult<T: Real> {
    pub coefficient: Matrix<T>,
    pub pivots: PivotSet,
    pub residual: T,
}

/// `W ≈ C U R` with `C`, `R` verbatim column and row slices of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CurResult<T: Real> {
    pub c: Matrix<T>,
    pub u: Matrix<T>,
    pub r_mat: Matrix<T>,
    pub row_pivots: PivotSet,
    pub col_pivots: PivotSet,
    pub residual: T,
}

impl<T: Real> CurResult<T> {
    pub fn reconstruct(&self) -> Result<Matrix<T>> {
        self.c.matmul(&self.u)?.matmul(&self.r_mat)
    }
}

/// Minimum-norm least-squares coefficient over the skeleton rows `w[pivots,:]`.
pub fn mid_fit<T: Real>(w: &Matrix<T>, pivots: &PivotSet, delta_w: &Matrix<T>) -> Result<MidResult<T>> {
    if delta_w.cols() != w.cols() {
        return Err(shape_err!(
            "target has {} columns but the matrix has {}",
            delta_w.cols(),
            w.cols()
        ));
    }
    pivots.check_bounds(w.rows())?;
    let skeleton = w.select_rows(&pivots.indices)?;
    let coefficient = least_squares_right(&skeleton, delta_w)?;
    let residual = coefficient.matmul(&skeleton)?.sub(delta_w)?.frobenius_norm();
    Ok(MidResult {
        coefficient,
        pivots: pivots.clone().with_axis(Axis::Rows),
        residual,
    })
}

/// CUR with the Frobenius-optimal link `U = C⁺ W R⁺`.
pub fn cur_decompose<T: Real>(w: &Matrix<T>, row_pivots: &PivotSet, col_pivots: &PivotSet) -> Result<CurResult<T>> {
    if row_pivots.is_empty() || col_pivots.is_empty() {
        return Err(shape_err!("CUR needs at least one row and one column pivot"));
    }
    row_pivots.check_bounds(w.rows())?;
    col_pivots.check_bounds(w.cols())?;
    let c = w.select_cols(&col_pivots.indices)?;
    let r_mat = w.select_rows(&row_pivots.indices)?;
    let tol = default_rank_tol::<T>();
    let u = pseudo_inverse(&c, tol)?.matmul(w)?.matmul(&pseudo_inverse(&r_mat, tol)?)?;
    let residual = w.sub(&c.matmul(&u)?.matmul(&r_mat)?)?.frobenius_norm();
    Ok(CurResult {
        c,
        u,
        r_mat,
        row_pivots: row_pivots.clone().with_axis(Axis::Rows),
        col_pivots: col_pivots.clone().with_axis(Axis::Cols),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn w3x4() -> Matrix<f64> {
        Matrix::from_rows(&[
            [1.0, 0.0, 2.0, -1.0],
            [0.0, 1.0, 1.0, 3.0],
            [2.0, 1.0, 5.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn zero_target_gives_zero_coefficient() {
        let w = w3x4();
        let res = mid_fit(&w, &PivotSet::rows(vec![0, 1]).unwrap(), &Matrix::zeros(3, 4)).unwrap();
        assert_eq!(res.coefficient.max_abs(), 0.0);
        assert_eq!(res.residual, 0.0);
    }

    #[test]
    fn exactly_representable_target() {
        let w = w3x4();
        let s = PivotSet::rows(vec![0, 1]).unwrap();
        let e = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [0.0, 4.0]]).unwrap();
        let target = e.matmul(&w.select_rows(&s.indices).unwrap()).unwrap();
        let res = mid_fit(&w, &s, &target).unwrap();
        assert!(res.coefficient.max_abs_diff(&e).unwrap() < 1e-9);
        assert!(res.residual < 1e-9);
    }

    #[test]
    fn out_of_range_pivot() {
        let w = w3x4();
        let err = mid_fit(&w, &PivotSet::rows(vec![0, 3]).unwrap(), &Matrix::zeros(1, 4)).unwrap_err();
        assert!(matches!(err, Error::Index(_)));
        assert!(matches!(
            mid_fit(&w, &PivotSet::rows(vec![0]).unwrap(), &Matrix::zeros(1, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cur_full_pivots_exact() {
        let w = Matrix::from_rows(&[[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]).unwrap();
        let all = vec![0, 1, 2];
        let res = cur_decompose(&w, &PivotSet::rows(all.clone()).unwrap(), &PivotSet::cols(all).unwrap()).unwrap();
        assert!(res.residual < 1e-12);
    }

    #[test]
    fn cur_diagonal_support() {
        let w = Matrix::from_diag(&[3.0, 2.0, 1.0, 0.0]);
        let p = vec![0, 1, 2];
        let res = cur_decompose(&w, &PivotSet::rows(p.clone()).unwrap(), &PivotSet::cols(p).unwrap()).unwrap();
        assert!(res.residual < 1e-12);
        assert_eq!(res.c.col(1), w.col(1));
    }

    #[test]
    fn cur_requires_pivots() {
        let w = Matrix::<f64>::identity(2);
        assert!(cur_decompose(&w, &PivotSet::rows(vec![]).unwrap(), &PivotSet::cols(vec![0]).unwrap()).is_err());
        assert!(matches!(
            cur_decompose(&w, &PivotSet::rows(vec![0]).unwrap(), &PivotSet::cols(vec![2]).unwrap()),
            Err(Error::Index(_))
        ));
    }
}
