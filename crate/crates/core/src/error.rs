use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("fan_in must be at least 1, got {0}")]
    InvalidFanIn(usize),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("epoch {epoch} outside schedule range [0, {total}]")]
    EpochOutOfRange { epoch: usize, total: usize },

    /// Pure weight-decay dynamics with contraction factor `1 - 2*lr*lambda` at or below -1.
    #[error("weight decay diverges or oscillates: contraction factor {factor}")]
    Divergence { factor: f64 },

    #[error("pattern length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("activation pattern is empty")]
    EmptyPattern,

    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("requested {requested} pairs but only {available} exist")]
    NumPairsTooLarge { requested: usize, available: usize },

    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("invalid band [{low}, {high}]")]
    InvalidBand { low: f64, high: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("sweep is empty")]
    EmptySweep,

    #[error("trace is empty")]
    EmptyTrace,

    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
