use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {}: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload {} holds {actual} bytes, header dims require {expected}", path.display())]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("mask contains no tumor voxels")]
    EmptyMask,

    #[error("region offset {offset:?} size {size:?} exceeds volume dims {dims:?}")]
    RegionOutOfBounds {
        offset: [usize; 3],
        size: [usize; 3],
        dims: [usize; 3],
    },

    #[error("summed-area table for dims {0:?} exceeds addressable size")]
    TableTooLarge([usize; 3]),

    #[error("shape out of bounds: {0}")]
    ShapeOutOfBounds(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
