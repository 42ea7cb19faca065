use serde::{Deserialize, Serialize};

use crate::adapters::config::{check_split, Method};
use crate::error::{config_err, Error, Result};

/// One adapted weight matrix, `d_out x d_in`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub label: String,
    pub d_out: usize,
    pub d_in: usize,
}

/// Adapted matrix shapes of one transformer layer, repeated `layer_count` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub name: String,
    pub layer_count: usize,
    pub sites: Vec<Site>,
}

const BUILTIN: [(&str, &str); 3] = [
    ("llama3-8b", include_str!("registry/llama3-8b.toml")),
    ("mistral-7b", include_str!("registry/mistral-7b.toml")),
    ("llama3.2-3b", include_str!("registry/llama3.2-3b.toml")),
];

impl ArchitectureDescriptor {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let desc: Self = toml::from_str(text).map_err(|e| config_err!("architecture descriptor: {e}"))?;
        desc.validate()?;
        Ok(desc)
    }

    /// A single `d_out x d_in` matrix in a one-layer model.
    pub fn single(d_out: usize, d_in: usize) -> Self {
        Self {
            name: format!("single-{d_out}x{d_in}"),
            layer_count: 1,
            sites: vec![Site { label: "w".into(), d_out, d_in }],
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, text)| Self::from_toml_str(text))
            .unwrap_or_else(|| Err(Error::Registry(name.to_string())))
    }

    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(n, _)| *n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 || self.sites.is_empty() {
            return Err(config_err!("{}: needs at least one layer and one site", self.name));
        }
        if let Some(s) = self.sites.iter().find(|s| s.d_out == 0 || s.d_in == 0) {
            return Err(config_err!("{}: site `{}` has a zero dimension", self.name, s.label));
        }
        Ok(())
    }
}

/// Trainable parameters of one adapted matrix.
pub fn count_site(method: Method, d_out: usize, d_in: usize, r: usize, k: usize, s: usize) -> Result<u64> {
    let (d_out, d_in, r, k) = (d_out as u64, d_in as u64, r as u64, k as u64);
    Ok(match method {
        Method::Lora => r * (d_in + d_out),
        Method::Dora => r * (d_in + d_out) + d_out,
        Method::MoeLora => k * r * (d_in + d_out) + k * d_in,
        Method::IdLora => {
            check_split(d_out as usize, r as usize, s)?;
            let s = s as u64;
            (d_out / s) * (r / s) + r
        }
    })
}

/// Exact trainable-parameter total over every adapted matrix of `arch`.
pub fn count_trainable(method: Method, arch: &ArchitectureDescriptor, r: usize, k: usize, s: usize) -> Result<u64> {
    arch.validate()?;
    let per_layer = arch
        .sites
        .iter()
        .map(|site| count_site(method, site.d_out, site.d_in, r, k, s))
        .sum::<Result<u64>>()?;
    Ok(per_layer * arch.layer_count as u64)
}

/// Millions with one decimal (`21.0M`), or billions once past a thousand million.
pub fn format_count(n: u64) -> String {
    if n >= 1_000_000_000 {
        format!("{:.1}B", n as f64 / 1e9)
    } else {
        format!("{:.1}M", n as f64 / 1e6)
    }
}
