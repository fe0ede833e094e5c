use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run diverged at update {update} (loss {loss}); partial outputs in {dir}")]
    Diverged { update: usize, loss: f64, dir: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(acco_core::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            _ => 1,
        }
    }
}

impl From<acco_core::Error> for CliError {
    fn from(e: acco_core::Error) -> Self {
        use acco_core::Error as E;
        match e {
            E::InvalidConfig(_)
            | E::DimensionMismatch { .. }
            | E::UnknownMethod(_)
            | E::LayoutMismatch(_)
            | E::EmptyBatch => CliError::Config(e.to_string()),
            other => CliError::Sim(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
