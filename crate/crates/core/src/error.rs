use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("spacelike violation: {0}")]
    SpacelikeViolation(String),

    #[error("construction failure: {0}")]
    ConstructionFailure(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
