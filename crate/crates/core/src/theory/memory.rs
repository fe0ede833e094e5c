use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training schemes compared in the memory table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMethod {
    Ddp,
    Zero1,
    Zero2,
    Zero3,
    Slowmo,
    Diloco,
    Co2,
    Dpu,
    Wp,
    Acco,
}

impl MemoryMethod {
    pub const ALL: [MemoryMethod; 10] = [
        MemoryMethod::Ddp,
        MemoryMethod::Zero1,
        MemoryMethod::Zero2,
        MemoryMethod::Zero3,
        MemoryMethod::Slowmo,
        MemoryMethod::Diloco,
        MemoryMethod::Co2,
        MemoryMethod::Dpu,
        MemoryMethod::Wp,
        MemoryMethod::Acco,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryMethod::Ddp => "ddp",
            MemoryMethod::Zero1 => "zero1",
            MemoryMethod::Zero2 => "zero2",
            MemoryMethod::Zero3 => "zero3",
            MemoryMethod::Slowmo => "slowmo",
            MemoryMethod::Diloco => "diloco",
            MemoryMethod::Co2 => "co2",
            MemoryMethod::Dpu => "dpu",
            MemoryMethod::Wp => "wp",
            MemoryMethod::Acco => "acco",
        }
    }
}

impl std::str::FromStr for MemoryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MemoryMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryQuery {
    pub method: MemoryMethod,
    /// Optimizer bytes per parameter.
    pub k: f64,
    pub workers: u64,
    /// Parameter count.
    pub psi: f64,
}

/// Bytes per replica. Parameters and gradients take 2 bytes each per
/// parameter; `K` covers optimizer state.
pub fn memory_model(q: &MemoryQuery) -> Result<f64> {
    if !(q.k > 0.0 && q.k.is_finite()) || q.workers == 0 || !(q.psi >= 1.0 && q.psi.is_finite()) {
        return Err(Error::InvalidConfig("memory query needs K > 0, N >= 1 and Psi >= 1".into()));
    }
    let (k, n) = (q.k, q.workers as f64);
    let per_param = match q.method {
        MemoryMethod::Ddp => 2.0 + 2.0 + k,
        MemoryMethod::Zero1 => 2.0 + 2.0 + k / n,
        MemoryMethod::Zero2 => 2.0 + (2.0 + k) / n,
        MemoryMethod::Zero3 => (2.0 + 2.0 + k) / n,
        MemoryMethod::Slowmo | MemoryMethod::Diloco => 2.0 + 2.0 + 2.0 * 2.0 + k,
        MemoryMethod::Co2 => 2.0 + 2.0 + 4.0 * 2.0 + k,
        MemoryMethod::Dpu | MemoryMethod::Wp | MemoryMethod::Acco => 2.0 + 2.0 + 2.0 + k / n,
    };
    Ok(per_param * q.psi)
}

/// Whole gigabytes (1 GB = 1e9 bytes), rounded down.
pub fn floor_gb(bytes: f64) -> u64 {
    (bytes / 1e9).floor() as u64
}
