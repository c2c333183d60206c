use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate record for frame {frame}, id {id} (lines {first_line} and {second_line})")]
    DuplicateRecord {
        frame: u32,
        id: u64,
        first_line: usize,
        second_line: usize,
    },

    #[error("line {line}: box of id {id} at frame {frame} lies fully outside the {width}x{height} frame")]
    BoxOutsideFrame {
        line: usize,
        id: u64,
        frame: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid tube {id}: {reason}")]
    InvalidTube { id: u64, reason: String },

    #[error("duplicate tube id {0}")]
    DuplicateTubeId(u64),

    #[error("unknown tube id {0}")]
    UnknownTube(u64),

    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (u32, u32),
        right: (u32, u32),
    },

    #[error("background sample store is empty")]
    EmptyStore,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("value {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },

    #[error("source frame {frame} unavailable for tube {tube_id}")]
    MissingFrame { frame: u32, tube_id: u64 },

    #[error("object at ({left}, {top}) size {width}x{height} does not fit a {frame_width}x{frame_height} frame")]
    OutOfBounds {
        left: u32,
        top: u32,
        width: u32,
        height: u32,
        frame_width: u32,
        frame_height: u32,
    },

    #[error("no frame source entry at {0}")]
    NoSuchFrame(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
