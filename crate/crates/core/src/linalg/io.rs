//! `IDLM` matrix files: magic, version `u32`, rows `u64`, cols `u64`, then
//! `rows * cols` little-endian `f64` values in row-major order.

use std::io::{Read, Write};

use crate::error::{format_err, Result};
use crate::linalg::matrix::Matrix;
use crate::scalar::Real;

pub const MATRIX_MAGIC: &[u8; 4] = b"IDLM";
pub const MATRIX_VERSION: u32 = 1;

/// Little-endian cursor over a byte slice with truncation errors.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(format_err!(
                "truncated payload: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(format_err!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            ));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format_err!("value {v} does not fit in usize"))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn reals<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| format_err!("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            ));
        }
        Ok(())
    }
}

pub(crate) fn put_reals<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

pub fn encode_matrix<T: Real>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.as_slice().len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    put_reals(&mut out, m.as_slice());
    out
}

pub fn decode_matrix<T: Real>(bytes: &[u8]) -> Result<Matrix<T>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MATRIX_MAGIC)?;
    let version = r.u32()?;
    if version != MATRIX_VERSION {
        return Err(format_err!("unsupported matrix version {version}"));
    }
    let rows = r.usize()?;
    let cols = r.usize()?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err!("matrix dimensions overflow"))?;
    let data = r.reals(n)?;
    r.finish()?;
    Matrix::new(rows, cols, data).map_err(|e| format_err!("invalid matrix payload: {e}"))
}

pub fn write_matrix<T: Real, W: Write>(m: &Matrix<T>, mut w: W) -> Result<()> {
    w.write_all(&encode_matrix(m))?;
    Ok(())
}

pub fn read_matrix<T: Real, R: Read>(mut r: R) -> Result<Matrix<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_matrix(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[[1.0f64, 2.0, 3.0]]).unwrap();
        let b = encode_matrix(&m);
        assert_eq!(&b[..4], b"IDLM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 2.0);
        assert_eq!(b.len(), 24 + 24);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let m = Matrix::<f64>::identity(2);
        let good = encode_matrix(&m);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_matrix::<f64>(&bad), Err(crate::Error::Format(_))));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_matrix::<f64>(&bad), Err(crate::Error::Format(_))));
        assert!(matches!(
            decode_matrix::<f64>(&good[..good.len() - 1]),
            Err(crate::Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::<f64>::random_normal(rows, cols, &mut rng);
            let back: Matrix<f64> = decode_matrix(&encode_matrix(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
