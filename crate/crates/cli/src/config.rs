use std::path::{Path, PathBuf};

use acco_core::problems::{InitSpec, ProblemConfig};
use acco_core::{CostModel, HeterogeneityProfile, OptimizerConfig, Protocol, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method_name: Protocol,
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
    pub n_workers: usize,
    /// Samples per micro-batch.
    pub batch_size: usize,
    #[serde(default = "one")]
    pub n_grad_accumulation: u32,
    #[serde(default)]
    pub warmup_rounds: usize,
    #[serde(rename = "T_updates")]
    pub t_updates: usize,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default = "nominal_speed")]
    pub heterogeneity: HeterogeneityProfile,
    #[serde(default)]
    pub full_batch: bool,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> u32 {
    1
}

fn nominal_speed() -> HeterogeneityProfile {
    HeterogeneityProfile::homogeneous(1.0)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.t_updates == 0 {
            return Err(CliError::Config("T_updates must be >= 1".into()));
        }
        self.optimizer.validate()?;
        self.sim().validate()?;
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            n_workers: self.n_workers,
            batch_size: self.batch_size,
            n_grad_accumulation: self.n_grad_accumulation,
            warmup_rounds: self.warmup_rounds,
            full_batch: self.full_batch,
            master_seed: self.master_seed,
            cost: self.cost_model,
            profile: self.heterogeneity.clone(),
            record_trajectory: false,
        }
    }

    /// Canonical JSON (fixed key order, no output directory) and its
    /// SHA-256, so the same experiment hashes the same wherever it is
    /// written.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Explicit override, then the config's own `output_dir`, then
    /// `$ACCO_SIM_OUT/<method>-<hash>`, then `runs/<method>-<hash>`.
    pub fn resolve_output(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        let root = std::env::var_os(crate::OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!("{}-{}", self.method_name.name(), &self.hash()[..12]))
    }
}
