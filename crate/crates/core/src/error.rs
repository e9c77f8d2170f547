use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("backward pass for {0} called without a matching forward cache")]
    MissingCache(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("relation assignment is missing pair ({0}, {1})")]
    MissingRelation(usize, usize),

    #[error("solver diverged at step {time}: object {object} reached {speed:.3} m/s")]
    SolverDivergence {
        time: usize,
        object: usize,
        speed: f64,
    },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("non-finite prediction at rollout step {step}")]
    RolloutDiverged { step: usize },

    #[error("observation gap: expected consecutive time steps, got {previous} then {current}")]
    TimeGap { previous: usize, current: usize },

    #[error("feature layout version mismatch: expected {expected}, found {found}")]
    LayoutVersion { expected: u32, found: u32 },

    #[error("{kind} format version mismatch: expected {expected}, found {found}")]
    FormatVersion {
        kind: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("bad magic bytes: not a {0} file")]
    BadMagic(&'static str),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("missing inputs: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInputs(Vec<PathBuf>),

    #[error("{0} requires a belief state")]
    MissingBelief(&'static str),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
