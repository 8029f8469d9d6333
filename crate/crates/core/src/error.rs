use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({i}, {j}) out of range for dimension {rows}x{cols}")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },
    #[error("custom profile has no variance matrix for N = {0}")]
    MissingCustomData(usize),
    #[error("profile has no declared limit kernel: {0}")]
    NoLimit(&'static str),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid graphon: {0}")]
    InvalidGraphon(String),
    #[error("invalid tree encoding: {0}")]
    InvalidTree(String),
    #[error("catalan({0}) overflows u64")]
    CatalanOverflow(u32),
    #[error("k = {k} exceeds the tree cap {cap}")]
    TreeCapExceeded { k: u32, cap: u32 },
    #[error("toy-scale guard exceeded: {0}")]
    GuardExceeded(String),
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("expected a symmetric profile, got a rectangular one")]
    RectangularProfile,
    #[error("expected a rectangular profile")]
    NotRectangular,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("entry moments up to order {needed} required, {available} supplied")]
    MissingMoments { needed: usize, available: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("malformed partition: {0}")]
    MalformedPartition(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
