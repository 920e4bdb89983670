use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("mask pixel at ({x}, {y}) has value {value}, expected 0 or 255")]
    MaskValue { x: u32, y: u32, value: u8 },
    #[error("no normalization metadata for modality {0}")]
    MetaMissing(String),

    #[error("bad magic {found:?}, expected {expected:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingData(usize),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),

    #[error("distance transform has no seed pixels")]
    NoSeeds,
    #[error("mask is empty")]
    EmptyMask,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("stored embedding {0:?} has zero norm or non-finite entries")]
    ZeroNormVector(String),
    #[error("embedding store is empty")]
    EmptyStore,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty list")]
    EmptyList,

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("label {0:?} is not one of the declared classes")]
    UnknownLabel(String),
    #[error("no counterpart for sample {0:?}")]
    MissingPair(String),

    #[error("translation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("sidecar protocol error: {0}")]
    Protocol(String),
    #[error("sidecar request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("sidecar exited with status {0}")]
    NonzeroExit(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment (files, processes) rather than of
    /// the data or configuration.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MissingFile(_)
                | Error::BackendUnavailable(_)
                | Error::Timeout(_)
                | Error::NonzeroExit(_)
        )
    }
}
