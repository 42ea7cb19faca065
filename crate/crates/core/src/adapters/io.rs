use std::sync::Arc;

use crate::adapters::any::AnyAdapter;
use crate::adapters::config::{AdapterConfig, Method};
use crate::adapters::idlora::IdLoraLayer;
use crate::adapters::lora::LoraLayer;
use crate::adapters::moelora::{Expert, MoeLoraLayer};
use crate::cluster::BasisSet;
use crate::error::{format_err, Result};
use crate::linalg::io::{put_reals, ByteReader};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const ADAPTER_MAGIC: &[u8; 4] = b"IDLA";
pub const ADAPTER_VERSION: u32 = 1;

fn put_header(out: &mut Vec<u8>, cfg: &AdapterConfig) {
    out.extend_from_slice(ADAPTER_MAGIC);
    out.extend_from_slice(&ADAPTER_VERSION.to_le_bytes());
    out.push(cfg.method.code());
    out.extend_from_slice(&(cfg.d_in as u64).to_le_bytes());
    out.extend_from_slice(&(cfg.d_out as u64).to_le_bytes());
    out.extend_from_slice(&(cfg.r as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.k as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.s as u32).to_le_bytes());
    out.extend_from_slice(&cfg.alpha.to_le_bytes());
}

/// Trainable state only; the frozen weight (and, for ID-LoRA, the basis rows)
/// is supplied again on load.
pub fn serialize_adapter<T: Real>(layer: &AnyAdapter<T>) -> Vec<u8> {
    let mut out = Vec::new();
    match layer {
        AnyAdapter::Lora(l) => {
            put_header(&mut out, &l.config);
            put_reals(&mut out, l.a.as_slice());
            put_reals(&mut out, l.b.as_slice());
        }
        AnyAdapter::MoeLora(l) => {
            put_header(&mut out, &l.config);
            put_reals(&mut out, l.gate.as_slice());
            for e in &l.experts {
                put_reals(&mut out, e.a.as_slice());
                put_reals(&mut out, e.b.as_slice());
            }
        }
        AnyAdapter::IdLora(l) => {
            put_header(&mut out, &l.config);
            for &i in l.basis.row_indices.iter().flatten() {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
            put_reals(&mut out, l.b_shared.as_slice());
            put_reals(&mut out, &l.router_t);
        }
    }
    out
}

fn read_header(rd: &mut ByteReader<'_>) -> Result<AdapterConfig> {
    rd.expect_magic(ADAPTER_MAGIC)?;
    let version = rd.u32()?;
    if version != ADAPTER_VERSION {
        return Err(format_err!("unsupported adapter version {version}"));
    }
    let code = rd.u8()?;
    let method = Method::from_code(code).ok_or_else(|| format_err!("unknown adapter method code {code}"))?;
    let cfg = AdapterConfig {
        d_in: rd.usize()?,
        d_out: rd.usize()?,
        r: rd.u32()? as usize,
        k: rd.u32()? as usize,
        s: rd.u32()? as usize,
        alpha: rd.f64()?,
        method,
    };
    cfg.validate().map_err(|e| format_err!("adapter header: {e}"))?;
    Ok(cfg)
}

/// Reads only the header of an adapter file.
pub fn peek_adapter_config(bytes: &[u8]) -> Result<AdapterConfig> {
    read_header(&mut ByteReader::new(bytes))
}

fn read_matrix_payload<T: Real>(rd: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<Matrix<T>> {
    Matrix::new(rows, cols, rd.reals(rows * cols)?).map_err(|e| format_err!("adapter payload: {e}"))
}

/// Inverse of [`serialize_adapter`] given the same frozen weight.
pub fn deserialize_adapter<T: Real>(bytes: &[u8], w: impl Into<Arc<Matrix<T>>>) -> Result<AnyAdapter<T>> {
    let w = w.into();
    let mut rd = ByteReader::new(bytes);
    let cfg = read_header(&mut rd)?;
    let (d_in, d_out, r, k) = (cfg.d_in, cfg.d_out, cfg.r, cfg.k);
    let layer = match cfg.method {
        Method::Lora => {
            let a = read_matrix_payload(&mut rd, r, d_in)?;
            let b = read_matrix_payload(&mut rd, d_out, r)?;
            rd.finish()?;
            LoraLayer::from_parts(w, a, b, cfg)?.into()
        }
        Method::MoeLora => {
            let gate = read_matrix_payload(&mut rd, k, d_in)?;
            let mut experts = Vec::with_capacity(k);
            for _ in 0..k {
                let a = read_matrix_payload(&mut rd, r, d_in)?;
                let b = read_matrix_payload(&mut rd, d_out, r)?;
                experts.push(Expert { a, b });
            }
            rd.finish()?;
            MoeLoraLayer::from_parts(w, experts, gate, cfg)?.into()
        }
        Method::IdLora => {
            let mut indices = Vec::with_capacity(k);
            for _ in 0..k {
                indices.push((0..r).map(|_| rd.usize()).collect::<Result<Vec<_>>>()?);
            }
            let b = read_matrix_payload(&mut rd, d_out / cfg.s, r / cfg.s)?;
            let t = rd.reals(r)?;
            rd.finish()?;
            let basis = BasisSet::extract(&w, indices)?;
            IdLoraLayer::from_parts(w, basis, b, t, cfg)?.into()
        }
        Method::Dora => unreachable!("header validation rejects dora"),
    };
    Ok(layer)
}
