use std::path::Path;

use ddfdi_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// The data or plant fail the solvability conditions.
    pub const UNSOLVABLE: u8 = 2;
    /// Unreadable input, schema violations, bad flags or configuration.
    pub const SCHEMA: u8 = 3;
    /// A computed result failed its own post-condition check.
    pub const NUMERICAL: u8 = 4;
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Prefixes schema errors with the file they came from.
    pub fn at(self, path: &Path) -> Self {
        match self {
            CliError::Schema(msg) => CliError::Schema(format!("{}: {msg}", path.display())),
            CliError::Io { path: p, source } if p.is_empty() || p.starts_with('<') => CliError::io(path, source),
            other => other,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Schema(_) => exit::SCHEMA,
            CliError::Core(e) => match e {
                CoreError::SolvabilityFailed(_)
                | CoreError::RankDeficientCe { .. }
                | CoreError::NotReconstructable(_)
                | CoreError::RankDeficientRegressor { .. }
                | CoreError::NotIdentifiable(_) => exit::UNSOLVABLE,
                CoreError::ResidualTooLarge { .. } | CoreError::RankMismatch { .. } | CoreError::GuaranteeViolated(_) => {
                    exit::NUMERICAL
                }
                CoreError::DimensionMismatch { .. }
                | CoreError::InvalidSystem(_)
                | CoreError::InvalidTolerance(_)
                | CoreError::InvalidExcitation(_)
                | CoreError::HorizonTooShort { .. }
                | CoreError::FaultyHistoricalData { .. }
                | CoreError::OutOfRange { .. } => exit::SCHEMA,
            },
        }
    }
}
