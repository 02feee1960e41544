use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-positive parameter: {0}")]
    NonPositiveParameter(String),

    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),

    #[error("{classes} classes do not divide feature dimension {dim} into equal blocks")]
    IndivisibleBlock { classes: usize, dim: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("class pair ({0}, {0}) is degenerate")]
    DegeneratePair(usize),

    #[error("aggregated variance of subcarrier {0} is not positive")]
    ZeroVariance(usize),

    #[error("receive vector of subcarrier {0} is zero")]
    ZeroDenominator(usize),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
