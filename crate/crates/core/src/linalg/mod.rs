//! Dense linear algebra: products, norms, truncated SVD, least squares,
//! pseudoinverse and numerical rank.

pub mod io;
mod lstsq;
mod matrix;
mod svd;

pub use lstsq::{default_rank_tol, least_squares_right, numerical_rank, pseudo_inverse};
pub use matrix::{axpy, dot, frobenius_norm, matmul, norm2, sq_dist, Matrix};
pub use svd::{singular_values, svd, truncated_svd, SvdResult};
