use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // ingestion / preprocessing
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sequence {seq_id}: event {index} does not strictly follow its predecessor")]
    NonIncreasingTimes { seq_id: String, index: usize },
    #[error("sequence {seq_id}: event {index} has a mark outside [0, K)")]
    MarkOutOfRange { seq_id: String, index: usize },
    #[error("sequence {seq_id}: event {index} lies outside the observation window")]
    OutsideWindow { seq_id: String, index: usize },
    #[error("dataset has no events")]
    EmptyDataset,
    #[error("not enough sequences ({available}) for the requested split")]
    TooFewSequences { available: usize },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("Hawkes process is not stationary (spectral radius {spectral_radius:.4} >= 1)")]
    UnstableProcess { spectral_radius: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // differentiation graph
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(String),
    #[error("non-finite gradient in block {0}")]
    NonFiniteGradient(String),
    #[error("duplicate parameter block name {0}")]
    DuplicateBlock(String),
    #[error("unknown parameter block {0}")]
    UnknownBlock(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    // models / objectives
    #[error("inter-arrival time must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("total marked intensity is zero")]
    ZeroTotalIntensity,
    #[error("non-finite loss at sequence {sequence}, event {event:?}")]
    NonFiniteLoss {
        sequence: usize,
        event: Option<usize>,
    },
    #[error("compensator derivative is not positive at sequence {sequence}, event {event}")]
    NonMonotoneCompensator { sequence: usize, event: usize },
    #[error("{form} likelihood is not available for the {family} decoder")]
    UnsupportedForm {
        form: &'static str,
        family: &'static str,
    },

    // conflict diagnostics
    #[error("gradient vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("both gradients are zero")]
    BothZero,
    #[error("empty series")]
    EmptySeries,
    #[error("no gradient conflict in the supplied batch (cos = {0:.4})")]
    NoConflictFound(f64),

    // evaluation
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("CDF never exceeds 0.5 below tau = {0:e}")]
    BracketFailure(f64),

    // training
    #[error("epoch {epoch}, step {step}: {source}")]
    Training {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
