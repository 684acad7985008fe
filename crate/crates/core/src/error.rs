use std::io;

/// Errors produced while loading volumes or computing moments.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    UnsupportedBitDepth(u32),

    #[error("unsupported NRRD field `{field}`: {value}")]
    UnsupportedNrrd { field: String, value: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid spacing ({0}, {1}, {2}): components must be finite and > 0")]
    InvalidSpacing(f64, f64, f64),

    #[error("coordinate ({x}, {y}, {z}) outside volume of dims {dims:?}")]
    OutOfBounds {
        x: usize,
        y: usize,
        z: usize,
        dims: [usize; 3],
    },

    #[error("unsupported moment order {0} (expected 3 or 4)")]
    UnsupportedOrder(u32),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("volume has zero mass")]
    ZeroMass,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::UnsupportedBitDepth(_) => "unsupported_bit_depth",
            Error::UnsupportedNrrd { .. } => "unsupported_nrrd",
            Error::MalformedHeader(_) => "malformed_header",
            Error::InvalidVolume(_) => "invalid_volume",
            Error::InvalidSpacing(..) => "invalid_spacing",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::UnsupportedOrder(_) => "unsupported_order",
            Error::Overflow(_) => "overflow",
            Error::Inconsistent(_) => "internal_inconsistency",
            Error::ZeroMass => "zero_mass",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
