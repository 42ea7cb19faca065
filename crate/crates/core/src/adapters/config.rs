use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lora,
    /// Counting only; there is no DoRA layer.
    Dora,
    MoeLora,
    IdLora,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lora, Method::Dora, Method::MoeLora, Method::IdLora];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lora => "lora",
            Method::Dora => "dora",
            Method::MoeLora => "moelora",
            Method::IdLora => "idlora",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Method::Lora => 0,
            Method::MoeLora => 1,
            Method::IdLora => 2,
            Method::Dora => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Method::Lora),
            1 => Some(Method::MoeLora),
            2 => Some(Method::IdLora),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lora" => Ok(Method::Lora),
            "dora" => Ok(Method::Dora),
            "moelora" | "moe-lora" | "moe_lora" => Ok(Method::MoeLora),
            "idlora" | "id-lora" | "id_lora" => Ok(Method::IdLora),
            other => Err(config_err!("unknown method `{other}`")),
        }
    }
}

/// Shape and scaling of one adapted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub d_in: usize,
    pub d_out: usize,
    /// Rank per basis (ID-LoRA) or per adapter (LoRA, each MoELoRA expert).
    pub r: usize,
    /// Number of bases or experts; 1 for LoRA.
    pub k: usize,
    /// Rank-boost split factor; 1 outside ID-LoRA.
    pub s: usize,
    pub alpha: f64,
    pub method: Method,
}

impl AdapterConfig {
    pub fn lora(d_in: usize, d_out: usize, r: usize, alpha: f64) -> Self {
        Self { d_in, d_out, r, k: 1, s: 1, alpha, method: Method::Lora }
    }

    pub fn moelora(d_in: usize, d_out: usize, r: usize, k: usize, alpha: f64) -> Self {
        Self { d_in, d_out, r, k, s: 1, alpha, method: Method::MoeLora }
    }

    pub fn idlora(d_in: usize, d_out: usize, r: usize, k: usize, s: usize, alpha: f64) -> Self {
        Self { d_in, d_out, r, k, s, alpha, method: Method::IdLora }
    }

    /// The `alpha / r` multiplier on the adapter contribution.
    pub fn scale(&self) -> f64 {
        self.alpha / self.r as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 {
            return Err(config_err!("d_in and d_out must be positive, got {}x{}", self.d_out, self.d_in));
        }
        if self.r == 0 || self.k == 0 {
            return Err(config_err!("r and k must be positive, got r={} k={}", self.r, self.k));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(config_err!("alpha must be positive and finite, got {}", self.alpha));
        }
        match self.method {
            Method::Dora => Err(config_err!("dora is supported for parameter counting only")),
            Method::Lora if self.k != 1 || self.s != 1 => {
                Err(config_err!("lora requires k = 1 and s = 1"))
            }
            Method::MoeLora if self.s != 1 => Err(config_err!("moelora requires s = 1")),
            Method::IdLora => {
                check_split(self.d_out, self.r, self.s)?;
                if self.r > self.d_in {
                    return Err(config_err!("r = {} exceeds d_in = {}", self.r, self.d_in));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_split(d_out: usize, r: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(config_err!("split factor s must be positive"));
    }
    if r % s != 0 {
        return Err(config_err!("s = {s} does not divide r = {r}"));
    }
    if d_out % s != 0 {
        return Err(config_err!("s = {s} does not divide d_out = {d_out}"));
    }
    Ok(())
}
