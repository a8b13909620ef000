//! Command failures and their exit codes.

use std::fmt;

/// Exit status of a failed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    /// Invalid flags, inconsistent inputs or malformed files.
    Validation = 2,
    /// The model does not fit the requested memory budget.
    BudgetExceeded = 3,
    /// Reading or writing a file failed.
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Validation,
            message: message.into(),
        }
    }

    pub fn budget(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::BudgetExceeded,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Io,
            message: message.into(),
        }
    }

    /// Wrap a toolkit error with the file or step it concerns.
    pub fn context(what: impl fmt::Display, e: mibmi::Error) -> Self {
        let code = match e {
            mibmi::Error::Io(_) => ExitCode::Io,
            _ => ExitCode::Validation,
        };
        Self {
            code,
            message: format!("{what}: {e}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mibmi::Error> for CliError {
    fn from(e: mibmi::Error) -> Self {
        let code = match e {
            mibmi::Error::Io(_) => ExitCode::Io,
            _ => ExitCode::Validation,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
