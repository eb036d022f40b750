use std::path::PathBuf;

/// Errors raised anywhere in the fingerprinting pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image: {0}")]
    CorruptImage(String),

    #[error("image too small: {width}x{height} (both dimensions must be at least {min})")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("target {target_w}x{target_h} is larger than source {source_w}x{source_h}")]
    TargetLargerThanSource {
        source_w: usize,
        source_h: usize,
        target_w: usize,
        target_h: usize,
    },

    #[error(
        "{levels} decomposition levels need both dimensions >= {needed}, got {width}x{height}"
    )]
    TooManyLevels {
        levels: usize,
        needed: usize,
        width: usize,
        height: usize,
    },

    #[error("malformed wavelet pyramid: {0}")]
    MalformedPyramid(String),

    #[error("sigma0 must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate correlation energy (flat or all-zero input)")]
    DegenerateEnergy,

    #[error("invalid exclusion radius {radius} for length {len}")]
    InvalidRadius { radius: usize, len: usize },

    #[error("bad magic in fingerprint file")]
    BadMagic,

    #[error("unsupported fingerprint file version {0}")]
    VersionMismatch(u16),

    #[error("truncated fingerprint file")]
    TruncatedFile,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("camera {camera_id}, {path}: {source}")]
    Context {
        camera_id: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure stems from bad input (files, formats, arguments)
    /// rather than from a computation on valid input.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::DegenerateEnergy | Error::MalformedPyramid(_) => false,
            Error::Context { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    pub(crate) fn with_context(self, camera_id: &str, path: impl Into<PathBuf>) -> Error {
        Error::Context {
            camera_id: camera_id.to_string(),
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
