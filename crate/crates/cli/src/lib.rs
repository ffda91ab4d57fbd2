//! Command-line runner for `thomas-lab`: configuration schema, task
//! execution and report emission.

pub mod config;
pub mod report;
pub mod run;
pub mod validate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<thomas_lab::LabError> for CliError {
    fn from(e: thomas_lab::LabError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl CliError {
    /// Process exit status: 2 for schema errors, 3 for numeric or i/o
    /// failures. Assertion failures exit with 1 and are not errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}
