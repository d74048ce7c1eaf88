use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` out of range: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (valid: {valid})")]
    IndexOutOfRange { index: usize, valid: String },

    #[error("degenerate network: {0}")]
    DegenerateNetwork(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("solver hit the iteration limit ({0} iterations)")]
    MaxIterations(usize),

    #[error("state diverged at t = {t} (step {step})")]
    Divergence { t: f64, step: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("memory capacity exhausted: {stored} patterns stored on a chain of {n} units")]
    Capacity { stored: usize, n: usize },

    #[error("no free latent rows on support {0:?}")]
    Collision(Vec<usize>),

    #[error("encoder has no response to pattern {0}")]
    DegenerateEncoder(usize),

    #[error("latent transition failed after {attempts} attempts (last support {last:?})")]
    TransitionFailed { attempts: usize, last: Vec<usize> },

    #[error("no certificate: {0}")]
    NoCertificate(String),

    #[error("unknown pattern {0}")]
    UnknownPattern(usize),

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("file truncated at byte offset {offset} (needed {needed} bytes)")]
    Truncated { offset: usize, needed: usize },

    #[error("count mismatch between images ({images}) and labels ({labels})")]
    CountMismatch { images: usize, labels: usize },

    #[error("pattern generation rejected {0} draws without success")]
    RejectionFailure(usize),

    #[error("unsupported model file version {found} (this build reads version {supported}); re-save the model with a matching build")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model file is corrupt: {0}")]
    CorruptModel(String),

    #[error("checksum mismatch: header says {expected:#010x}, payload hashes to {found:#010x}")]
    Checksum { expected: u32, found: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => 1,
            Error::Asymmetric(_)
            | Error::Numerical(_)
            | Error::MaxIterations(_)
            | Error::Divergence { .. }
            | Error::NotStabilizable(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
