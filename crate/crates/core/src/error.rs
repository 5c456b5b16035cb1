use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error type shared by every module in the crate.
///
/// Model-file errors keep distinct variants (`BadMagic`, `UnsupportedVersion`,
/// `Truncated`, `DimensionChain`) so callers can tell a corrupt stream from a
/// structurally invalid model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension chain violation at layer {layer}: {detail}")]
    DimensionChain { layer: usize, detail: String },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),
    #[error("trailing bytes after end of payload")]
    TrailingData,
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("reorder plan mismatch: {0}")]
    PlanMismatch(String),
    #[error("layer {0} has no reorder plan")]
    PlanMissing(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
