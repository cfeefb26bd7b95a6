use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy header: {0}")]
    MalformedHeader(String),

    #[error("unsupported npy dtype {0:?}, expected '<f4'")]
    UnsupportedDtype(String),

    #[error("payload holds {found} bytes, header shape {shape:?} requires {expected}")]
    PayloadLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("tensor contains a non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("image error for {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: mask pixel ({row}, {col}) has value {value}, expected 0 or 255", path.display())]
    NonBinaryMask {
        path: PathBuf,
        row: usize,
        col: usize,
        value: u8,
    },

    #[error("manifest {}: {source}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("inconsistent sequence: {0}")]
    InconsistentSequence(String),

    #[error("frame {frame}: objectness value {value} outside [0, 1]")]
    ObjectnessRange { frame: usize, value: f32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("window size must be odd and at least 3, got {0}")]
    InvalidWindow(usize),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("seed set is empty")]
    EmptySeeds,

    #[error("no background seeds qualify")]
    EmptyBackground,

    #[error("no foreground seeds qualify")]
    EmptyForeground,

    #[error("grid {height}x{width} too large for exhaustive oracle (limit {limit} pixels)")]
    GridTooLarge {
        height: usize,
        width: usize,
        limit: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    /// True for problems with the supplied files or arguments, as opposed to
    /// failures inside the segmentation pipeline itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::MalformedHeader(_)
            | Error::UnsupportedDtype(_)
            | Error::PayloadLength { .. }
            | Error::NonFinite(_)
            | Error::Shape(_)
            | Error::Image { .. }
            | Error::NonBinaryMask { .. }
            | Error::Manifest { .. }
            | Error::InconsistentSequence(_)
            | Error::ObjectnessRange { .. }
            | Error::Config(_)
            | Error::Scene(_)
            | Error::MissingGroundTruth(_) => true,
            Error::Frame { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
