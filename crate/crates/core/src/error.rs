use thiserror::Error;

/// Errors produced by the geometry, discretization and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("base coordinate {0} outside [0, 1]")]
    BaseCoordinate(f64),

    #[error("radius {0} is negative or non-finite")]
    Radius(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid grid: {0}")]
    GridConfig(String),

    #[error("invalid boundary map: {0}")]
    BoundaryMap(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// `level` is the 1-based time level inside a sweep, or 0 for a
    /// standalone dual update.
    #[error("starved base nodes at time level {level}: {nodes:?} (no kernel mass reaches them; dense mode with too small an epsilon is the usual cause)")]
    StarvedNodes { level: usize, nodes: Vec<usize> },

    #[error("dense kernel underflowed to exact zero; switch to log-domain mode")]
    KernelUnderflow,

    #[error("non-finite dense messages at time level {level}; switch to log-domain mode")]
    DenseOverflow { level: usize },

    #[error("scalar root solve failed: {0}")]
    RootSolve(String),

    #[error("invalid path measure: {0}")]
    PathMeasure(String),

    #[error("dilation factor must be positive on every charged path (path {path}, theta = {theta})")]
    DilationFactor { path: usize, theta: f64 },

    #[error("rescaling normalization is zero; measure carries no sigma mass")]
    ZeroNormalization,

    #[error("radius hit the floor {floor} at time {time} for atom {atom}; trajectory left the smooth regime")]
    BlowUp { atom: usize, time: f64, floor: f64 },

    #[error("flow map is not invertible at time level {level}; atom positions overlap or cross")]
    NonInvertibleFlow { level: usize },

    #[error("problem too large for exhaustive enumeration: {0} tuples")]
    ExhaustiveTooLarge(u128),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
