use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("rectangle {rect:?} exceeds {height}x{width} image")]
    OutOfBounds {
        rect: crate::Rect,
        height: usize,
        width: usize,
    },
    #[error("image {height}x{width} too small: {reason}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        reason: String,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid cell ({row},{col}) is {height}x{width}, smaller than a {patch}x{patch} mini-patch")]
    CellTooSmall {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("degenerate batch: {0} samples, need at least 2")]
    DegenerateBatch(usize),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("non-finite loss or gradient in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sample source: {0}")]
    Source(String),
}
