//! Frozen bases built from the rows nearest each cluster centroid.

use serde::{Deserialize, Serialize};

use crate::cluster::kmeans::ClusterModel;
use crate::error::{format_err, param_err, shape_err, Error, Result};
use crate::linalg::io::{put_reals, ByteReader};
use crate::linalg::{sq_dist, Matrix};
use crate::scalar::Real;

pub const BASIS_MAGIC: &[u8; 4] = b"IDLB";
pub const BASIS_VERSION: u32 = 1;

/// `k` frozen `r x d_in` skeletons, each a verbatim copy of source rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BasisSet<T: Real> {
    pub k: usize,
    pub r: usize,
    pub bases: Vec<Matrix<T>>,
    /// Source row of each basis row, ascending within a basis.
    pub row_indices: Vec<Vec<usize>>,
    pub source_rows: usize,
    pub source_cols: usize,
}

impl<T: Real> BasisSet<T> {
    /// Copies the given rows of `w`; index sets must be disjoint, distinct and equally sized.
    pub fn extract(w: &Matrix<T>, row_indices: Vec<Vec<usize>>) -> Result<Self> {
        let k = row_indices.len();
        let r = row_indices.first().map_or(0, Vec::len);
        let mut seen = vec![false; w.rows()];
        let mut bases = Vec::with_capacity(k);
        for (l, idx) in row_indices.iter().enumerate() {
            if idx.len() != r {
                return Err(shape_err!("basis {l} has {} rows, expected {r}", idx.len()));
            }
            for &i in idx {
                if i >= w.rows() {
                    return Err(Error::Index(format!(
                        "basis {l} row {i} out of range for {} rows",
                        w.rows()
                    )));
                }
                if seen[i] {
                    return Err(param_err!("row {i} appears in more than one basis slot"));
                }
                seen[i] = true;
            }
            bases.push(w.select_rows(idx)?);
        }
        Ok(Self {
            k,
            r,
            bases,
            row_indices,
            source_rows: w.rows(),
            source_cols: w.cols(),
        })
    }

    pub fn d_in(&self) -> usize {
        self.source_cols
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BASIS_MAGIC);
        out.extend_from_slice(&BASIS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.r as u32).to_le_bytes());
        out.extend_from_slice(&(self.source_cols as u64).to_le_bytes());
        for (idx, basis) in self.row_indices.iter().zip(&self.bases) {
            for &i in idx {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
            put_reals(&mut out, basis.as_slice());
        }
        out
    }

    /// Inverse of [`BasisSet::encode`]. The file does not record the source row
    /// count, so `source_rows` is set to one past the largest stored index.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        rd.expect_magic(BASIS_MAGIC)?;
        let version = rd.u32()?;
        if version != BASIS_VERSION {
            return Err(format_err!("unsupported basis version {version}"));
        }
        let k = rd.u32()? as usize;
        let r = rd.u32()? as usize;
        let d_in = rd.usize()?;
        let mut bases = Vec::with_capacity(k);
        let mut row_indices = Vec::with_capacity(k);
        for _ in 0..k {
            let idx = (0..r).map(|_| rd.usize()).collect::<Result<Vec<_>>>()?;
            let vals = rd.reals(r * d_in)?;
            bases.push(Matrix::new(r, d_in, vals).map_err(|e| format_err!("basis payload: {e}"))?);
            row_indices.push(idx);
        }
        rd.finish()?;
        let source_rows = row_indices.iter().flatten().max().map_or(0, |&m| m + 1);
        Ok(Self {
            k,
            r,
            bases,
            row_indices,
            source_rows,
            source_cols: d_in,
        })
    }
}

/// Per cluster, the `r` member rows of `w` closest to the centroid (ties to the
/// lower row index), stored in ascending row order.
pub fn select_basis<T: Real>(w: &Matrix<T>, model: &ClusterModel<T>, r: usize) -> Result<BasisSet<T>> {
    if model.assignments.len() != w.rows() || model.centroids.cols() != w.cols() {
        return Err(shape_err!(
            "cluster model over {} points of width {} does not match a {}x{} matrix",
            model.assignments.len(),
            model.centroids.cols(),
            w.rows(),
            w.cols()
        ));
    }
    let mut row_indices = Vec::with_capacity(model.k);
    for l in 0..model.k {
        let members = model.members(l);
        if members.len() < r {
            return Err(Error::Capacity(format!(
                "cluster {l} has {} members, fewer than r = {r}",
                members.len()
            )));
        }
        let centroid = model.centroids.row(l);
        let mut ranked: Vec<(T, usize)> = members
            .iter()
            .map(|&i| (sq_dist(w.row(i), centroid), i))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = ranked[..r].iter().map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        row_indices.push(chosen);
    }
    BasisSet::extract(w, row_indices)
}
