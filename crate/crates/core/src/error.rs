use alloc::string::String;

/// Errors raised by the core algorithms.
///
/// Every variant describes rejected input or an undefined result; none of the
/// operations here perform IO.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        context: &'static str,
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },
    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid camera pose: {0}")]
    InvalidPose(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("undefined result: {0}")]
    Undefined(&'static str),
    #[error("timestep {t} outside 1..={steps}")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("camera {frame} is inside primitive {primitive}")]
    CameraInsidePrimitive { frame: usize, primitive: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
