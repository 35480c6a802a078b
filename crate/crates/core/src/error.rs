use num_complex::Complex64;
use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {0} lies on the branch cut (negative real axis)")]
    BranchCut(Complex64),

    #[error("{function} overflows double precision at z = {z}")]
    Overflow { function: &'static str, z: Complex64 },

    #[error("Bessel order {0} outside the supported range |alpha| <= 8")]
    OrderRange(f64),

    #[error("lambda = {lambda} is not in the sector |arg| < pi - {eta}")]
    OutsideSector { lambda: Complex64, eta: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mesh file line {line}: {message}")]
    MeshFormat { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("metric is not positive definite at vertex {vertex}")]
    MetricNotPositive { vertex: usize },

    #[error("vertices {0} and {1} are not connected")]
    Unreachable(usize, usize),

    #[error("collar chart not injective at vertex {vertex} (epsilon = {epsilon}); reduce epsilon")]
    CollarNotInjective { vertex: usize, epsilon: f64 },

    #[error("point {0:?} is outside the collar")]
    OutsideCollar(Vec<f64>),

    #[error("kernel evaluated at coincident points outside singular quadrature")]
    SingularKernel,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("strict ellipticity fails at vertex {vertex}")]
    Ellipticity { vertex: usize },

    #[error("Neumann series does not contract at lambda = {lambda}: q = {q}")]
    NonContraction { lambda: Complex64, q: f64 },

    #[error("contour node {index} at z = {z} (t = {t}): {source}")]
    ContourNode { index: usize, z: Complex64, t: f64, source: Box<Error> },

    #[error("kernel unresolved at |lambda| = {modulus}: sqrt|lambda| * h = {resolution}")]
    Unresolved { modulus: f64, resolution: f64 },

    #[error("interior dimension {size} exceeds the dense cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// The underlying cause with contour-node context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::ContourNode { source, .. } => source.root(),
            e => e,
        }
    }
}
