use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("invalid excitation: {0}")]
    InvalidExcitation(String),

    #[error("horizon too short: need at least {required} samples, got {actual}")]
    HorizonTooShort { required: usize, actual: usize },

    #[error("historical data contain a nonzero fault sample at k = {k}")]
    FaultyHistoricalData { k: usize },

    #[error("window [{start}, {start}+{depth}) out of range for a signal of length {len}")]
    OutOfRange {
        start: usize,
        depth: usize,
        len: usize,
    },

    #[error("rank(CE) = {rank} but r = {r}; no disturbance decoupler exists")]
    RankDeficientCe { rank: usize, r: usize },

    #[error("pair is not reconstructable: {0}")]
    NotReconstructable(String),

    #[error("problem is not solvable: {0}")]
    SolvabilityFailed(String),

    #[error("[U_p; X_p] has rank {rank}, expected n + m = {expected}")]
    RankDeficientRegressor { rank: usize, expected: usize },

    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e} in {context}")]
    ResidualTooLarge {
        context: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("{context}: rank {actual}, expected {expected}")]
    RankMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical guarantee violated: {0}")]
    GuaranteeViolated(String),

    #[error("fault not identifiable: {0}")]
    NotIdentifiable(String),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
