use std::io;
use std::path::PathBuf;

use bbgc_core::SourceError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] bbgc_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a sample store (bad magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("store version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("store truncated: header promises {expected} records, only {complete} complete")]
    TruncatedStore { expected: u64, complete: u64 },
    #[error("store has {0} bytes after the last record")]
    TrailingData(u64),
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: &'static str, message: impl ToString) -> Self {
        Error::Format { what, message: message.to_string() }
    }

    /// Process exit code: 2 usage, 3 input contract, 4 calibration
    /// precondition, 5 source failure, 1 anything else (I/O).
    pub fn exit_code(&self) -> i32 {
        use bbgc_core::Error as C;
        match self {
            Error::Usage(_) => 2,
            Error::Core(C::Source(_)) => 5,
            Error::Core(
                C::EmptyDenseModeList
                | C::ZeroDenseCount { .. }
                | C::EmptyStore
                | C::AcceptanceStall { .. }
                | C::EmptyCluster(_)
                | C::KTooLarge { .. },
            ) => 4,
            Error::Core(C::InvalidConfig(_) | C::SizesOutOfRange(_)) => 2,
            Error::Core(_)
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::TruncatedStore { .. }
            | Error::TrailingData(_)
            | Error::Format { .. } => 3,
            Error::Io { .. } => 1,
        }
    }
}

impl From<SourceError> for Error {
    fn from(e: SourceError) -> Self {
        Error::Core(e.into())
    }
}
