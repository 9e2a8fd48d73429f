use std::fmt;
use std::process::ExitCode;

use holosplat::cloud::CloudError;
use holosplat::depth::DepthError;
use holosplat::eval::EvalError;
use holosplat::gaussian::GaussianError;
use holosplat::io::IoError;
use holosplat::train::TrainError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values (exit 1).
    Usage(String),
    /// Unreadable or inconsistent inputs (exit 2).
    Data(String),
    /// Non-finite loss, gradient or parameters (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    IoError,
    DepthError,
    EvalError,
    GaussianError,
    CloudError,
    std::io::Error
);

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(m),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}
