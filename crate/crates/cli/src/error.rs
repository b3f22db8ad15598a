use std::fmt;

/// Exit codes of the `plrates` binary.
pub mod code {
    pub const USAGE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const VALIDATION: u8 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: code::USAGE, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: code::DATA, message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError { code: code::NUMERICAL, message: msg.into() }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { code: code::VALIDATION, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<plrates::Error> for CliError {
    fn from(e: plrates::Error) -> Self {
        use plrates::Error::*;
        let code = match &e {
            Parameter(_) | Domain(_) | NotApplicable(_) => code::USAGE,
            Data(_) | Io(_) | Format(_) => code::DATA,
            Numerical(_) | Window(_) | Fit(_) => code::NUMERICAL,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
