use thiserror::Error;

/// Errors raised by the kernel crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("stale or mismatched forward cache: {0}")]
    Cache(String),
    #[error("invalid package: {0}")]
    Package(String),
    #[error("malformed package bytes: {0}")]
    Format(String),
    #[error("content hash mismatch")]
    HashMismatch,
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("{got} segmented slices, minimum is {min}")]
    InsufficientSlices { got: usize, min: usize },
    #[error("contour rasterizes to a self-intersecting or degenerate curve")]
    Topology,
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
