use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate orbit: sites {a:?} and {b:?} map to the same torus point (rational frequency?)")]
    DegenerateOrbit { a: Vec<i64>, b: Vec<i64> },

    #[error("cube must contain at least two sites")]
    TooFewSites,

    #[error("value out of range for {name}: {detail}")]
    OutOfRange { name: &'static str, detail: String },

    #[error("invalid coefficient schedule: {0}")]
    InvalidSchedule(String),

    #[error("dyadic index k={k} out of range 1..={max} at level {level}")]
    CubeIndexOutOfRange { level: u32, k: u64, max: u64 },

    #[error("level {level} exceeds the resolvable depth {max} for nu={nu}")]
    LevelTooDeep { level: u32, max: u32, nu: usize },

    #[error("split level {n0} outside 1..={max}")]
    SplitLevel { n0: u32, max: u32 },

    #[error("missing potential value for site {0:?}")]
    MissingPotential(Vec<i64>),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("eigensolver failed to converge after {iterations} iterations at index {index}")]
    NoConvergence { index: usize, iterations: usize },

    #[error("eigen residual check failed: residual {residual:e} exceeds {tolerance:e}")]
    ResidualCheck { residual: f64, tolerance: f64 },

    #[error("empty spectrum")]
    EmptySpectrum,

    #[error("fewer than three usable points for the slope fit ({0})")]
    TooFewPoints(usize),

    #[error("zero trials")]
    ZeroTrials,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
