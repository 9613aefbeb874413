use thiserror::Error;

/// Broad class of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or insufficient input data.
    Data,
    /// A numerical routine or model fit failed.
    Numeric,
    /// Filesystem or serialization failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("no data rows could be parsed ({failed} row errors, first: {first})")]
    AllRowsFailed { failed: usize, first: String },

    #[error("no records match filter {0}")]
    EmptySelection(String),

    #[error("slot index {index} out of range (0..{len})")]
    SlotIndex { index: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("density grids do not share the same abscissae")]
    GridMismatch,

    #[error("invalid cluster count {k}: {reason}")]
    InvalidClusterCount { k: usize, reason: String },

    #[error("no cluster structure: {0}")]
    NoClusterStructure(String),

    #[error("copula parameter out of domain: {0}")]
    Parameter(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("acceptance not reached after {attempts} attempts (empirical acceptance rate {rate:.3e})")]
    Acceptance { attempts: usize, rate: f64 },

    #[error("model file schema version {found} is not supported (expected {expected}); refit the model with this version")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format(_)
            | Error::AllRowsFailed { .. }
            | Error::EmptySelection(_)
            | Error::SlotIndex { .. }
            | Error::TooFewObservations { .. }
            | Error::Mismatch(_)
            | Error::SchemaVersion { .. } => ErrorClass::Data,
            Error::Domain(_)
            | Error::DegenerateSample(_)
            | Error::GridMismatch
            | Error::InvalidClusterCount { .. }
            | Error::NoClusterStructure(_)
            | Error::Parameter(_)
            | Error::Fit(_)
            | Error::Sampling(_)
            | Error::Acceptance { .. } => ErrorClass::Numeric,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    /// The innermost error, below any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
