use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Fock dimension {got}: at least {min} levels are required")]
    InvalidDimension { got: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("generator is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("expectation of a Hermitian operator has imaginary part {imag:e}")]
    ImaginaryMoment { imag: f64 },

    #[error("probe truncation leakage {leakage:e} exceeds the 1e-10 bound at d = {dim}")]
    TruncationLeakage { leakage: f64, dim: usize },

    #[error("invalid probe: {0}")]
    InvalidProbe(String),

    #[error("truncation envelope violated: occupation {mass:e} at or beyond index {index} (d = {dim})")]
    Envelope { mass: f64, index: usize, dim: usize },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parameter is not identifiable: {0}")]
    Unidentifiable(String),

    #[error("domain error: {0}")]
    Domain(String),
}
