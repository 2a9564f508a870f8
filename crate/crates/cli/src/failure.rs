use std::fmt;

use fusionkit::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Scenario(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Scenario(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Wraps a library error, naming the operation that produced it.
    pub fn from_library(op: &str, err: Error) -> Self {
        let msg = format!("{op}: {err}");
        match err {
            Error::DimensionMismatch(_)
            | Error::NonFinite
            | Error::Asymmetric { .. }
            | Error::NotPsd { .. }
            | Error::NotPd { .. }
            | Error::NotSampleable
            | Error::NoPriorInfo
            | Error::NoScore
            | Error::MmseRequiresGaussian
            | Error::Inadmissible { .. }
            | Error::InvalidInput(_) => CliError::Scenario(msg),
            Error::Singular { .. }
            | Error::SingularNormalMatrix { .. }
            | Error::SingularInformation { .. }
            | Error::SingularPosterior { .. }
            | Error::RouteDisagreement { .. }
            | Error::FormDisagreement { .. }
            | Error::NoRoot { .. }
            | Error::DegenerateBudget
            | Error::Degenerate(_)
            | Error::Consistency(_)
            | Error::Report(_) => CliError::Numerical(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Scenario(m) => write!(f, "scenario error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

pub trait Context<T> {
    fn context(self, op: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for fusionkit::Result<T> {
    fn context(self, op: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_library(op, e))
    }
}
