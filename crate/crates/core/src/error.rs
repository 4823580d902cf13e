use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, channel counts or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input values that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn validation_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
