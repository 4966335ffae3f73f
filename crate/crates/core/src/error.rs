use std::path::PathBuf;

use crate::types::VoxelKey;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate point: zero distance from the sensor origin")]
    DegeneratePoint,

    #[error("degenerate ray: origin and end coincide")]
    DegenerateRay,

    #[error("invalid map configuration: {0}")]
    InvalidConfig(String),

    #[error("voxel {0} engulfs the sensor origin")]
    EngulfsOrigin(VoxelKey),

    #[error("boundary record {0} already present")]
    DuplicateRecord(VoxelKey),

    #[error("corrupted boundary column {column:?}: {reason}")]
    CorruptedColumn { column: (i32, i32), reason: String },

    #[error("invalid scan pattern: {0}")]
    InvalidPattern(String),

    #[error("sensor pose {0:?} lies inside a visible box")]
    PoseInsideBox([f64; 3]),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: {message}")]
    EmptyInput { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
