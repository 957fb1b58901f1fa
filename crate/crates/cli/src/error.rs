use cvmet_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0} claim(s) failed")]
    ClaimsFailed(usize),

    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    /// 1 validation, 2 non-convergence, 3 internal contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ClaimsFailed(_) => 1,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                CoreError::NonConvergence(_)
                | CoreError::Envelope { .. }
                | CoreError::TruncationLeakage { .. } => 2,
                CoreError::Contract(_)
                | CoreError::NotHermitian { .. }
                | CoreError::ImaginaryMoment { .. } => 3,
                CoreError::InvalidDimension { .. }
                | CoreError::DimensionMismatch { .. }
                | CoreError::InvalidProbe(_)
                | CoreError::Unsupported(_)
                | CoreError::Unidentifiable(_)
                | CoreError::Domain(_) => 1,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
