use std::path::PathBuf;

/// Failures while reading or writing the on-disk formats.
///
/// Every variant carries a stable machine-readable [`IoError::kind`].
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },
    #[error("{}: parse error: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: bad magic, expected DFR1", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: truncated raster, expected {expected} bytes, found {actual}", path.display())]
    Truncated { path: PathBuf, expected: u64, actual: u64 },
    #[error("{}: trailing data, expected {expected} bytes, found {actual}", path.display())]
    TrailingData { path: PathBuf, expected: u64, actual: u64 },
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("frame {frame}: {}: raster is {width}x{height}, intrinsics declare {expected_width}x{expected_height}", path.display())]
    Dimension {
        frame: usize,
        path: PathBuf,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("frame {frame}: invalid pose: {message}")]
    Pose { frame: usize, message: String },
    #[error("frame {frame}: {message}")]
    Frame { frame: usize, message: String },
    #[error("manifest has no frames")]
    Empty,
}

impl IoError {
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "io",
            IoError::MissingFile { .. } => "missing_file",
            IoError::Parse { .. } => "parse",
            IoError::BadMagic { .. } => "bad_magic",
            IoError::Truncated { .. } => "truncated",
            IoError::TrailingData { .. } => "trailing_data",
            IoError::Version(_) => "version",
            IoError::Dimension { .. } => "dimension_mismatch",
            IoError::Pose { .. } => "pose",
            IoError::Frame { .. } => "frame",
            IoError::Empty => "empty",
        }
    }

    /// Frame index the error refers to, if any.
    pub fn frame(&self) -> Option<usize> {
        match self {
            IoError::Dimension { frame, .. } | IoError::Pose { frame, .. } | IoError::Frame { frame, .. } => {
                Some(*frame)
            }
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::MissingFile { path }
        } else {
            IoError::Io { path, source }
        }
    }
}
