//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A 6D rotation input whose columns are zero or (anti-)parallel.
    #[error("degenerate rotation input: {0}")]
    DegenerateInput(String),

    /// A sequence shorter than the minimum an operation needs.
    #[error("sequence too short: need at least {need} frames, got {got}")]
    SequenceTooShort { need: usize, got: usize },

    /// Fewer prominent peaks than offset estimation requires.
    #[error("insufficient peaks: need {need} with prominence >= {min_prominence:.4}, found {found}")]
    InsufficientPeaks {
        need: usize,
        found: usize,
        min_prominence: f64,
    },

    /// The yaw extremum is not unique enough to align on.
    #[error("ambiguous extremum: {0}")]
    AmbiguousExtremum(String),

    #[error("empty stream")]
    EmptyStream,

    /// A capture worker exceeded the barrier timeout.
    #[error("barrier timeout at cycle {cycle}: spread {spread_ms:.3} ms exceeds {timeout_ms:.3} ms")]
    BarrierTimeout {
        cycle: usize,
        spread_ms: f64,
        timeout_ms: f64,
    },

    /// A per-camera queue exceeded its capacity.
    #[error("queue overflow: camera {camera} at cycle {cycle} (capacity {capacity})")]
    QueueOverflow {
        camera: usize,
        cycle: usize,
        capacity: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no forward graph recorded for the requested node")]
    GraphNotRecorded,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Point sets too degenerate for a similarity alignment.
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("data shape mismatch: {0}")]
    DataShapeMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),

    /// NaN or infinity encountered where a finite value is required.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NumericFailure(_) => 4,
            Error::Io(_)
            | Error::EmptyStream
            | Error::SequenceTooShort { .. }
            | Error::InsufficientPeaks { .. }
            | Error::AmbiguousExtremum(_)
            | Error::LengthMismatch { .. }
            | Error::DataShapeMismatch(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
