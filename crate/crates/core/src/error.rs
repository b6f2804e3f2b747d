use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op}: length {len} is not a power of two")]
    NotPowerOfTwo { op: &'static str, len: usize },

    #[error("maxpool2: spatial dims {h}x{w} must be even; pad the input first")]
    OddSpatial { h: usize, w: usize },

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("mask contains a non-binary value {0}")]
    NonBinaryMask(f32),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("image {image} is {image_dims:?} but mask {mask} is {mask_dims:?}")]
    SizeMismatch {
        image: PathBuf,
        mask: PathBuf,
        image_dims: (u32, u32),
        mask_dims: (u32, u32),
    },

    #[error("{path}: unsupported pixel format {format}; expected 8-bit")]
    UnsupportedBitDepth { path: PathBuf, format: String },

    #[error("manifest {path}, line {line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite value at iteration {iter}: {tensor}")]
    NonFinite { iter: usize, tensor: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op,
        msg: msg.into(),
    }
}
