use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failures reported by a black-box generator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SourceError {
    #[error("source unavailable: {0}")]
    Unavailable(String),
    #[error("malformed response from source: {0}")]
    MalformedResponse(String),
    #[error("source timed out")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector norm is zero")]
    ZeroVector,
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("vector is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pool is empty")]
    EmptyPool,
    #[error("anchor and pool collections overlap in {count} latent codes")]
    OverlappingCollections { count: usize },
    #[error("at least two anchors are required, got {m}")]
    TooFewAnchors { m: usize },
    #[error("anchor or pool collection is empty")]
    EmptyCollections,
    #[error("curve sizes out of range: {0}")]
    SizesOutOfRange(String),
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("dense mode list is empty")]
    EmptyDenseModeList,
    #[error("dense mode {mode} has no neighbors in the store")]
    ZeroDenseCount { mode: usize },
    #[error("sample store is empty")]
    EmptyStore,
    #[error("acceptance stalled: {accepted} accepted after {proposals} proposals")]
    AcceptanceStall { proposals: u64, accepted: usize },
    #[error(transparent)]
    Source(#[from] SourceError),
}
