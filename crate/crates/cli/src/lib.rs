//! File formats and error classes shared by the `tatml` binary.

pub mod files;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("solver did not converge within the sweep budget")]
    NotConverged,
}

impl From<tatml::Error> for CliError {
    fn from(e: tatml::Error) -> Self {
        match e {
            tatml::Error::Config(_) | tatml::Error::Dimension(_) => CliError::Config(e.to_string()),
            tatml::Error::Numeric(_) | tatml::Error::NonFinite(_) | tatml::Error::Domain(_) => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Format(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::NotConverged => 5,
        }
    }
}
