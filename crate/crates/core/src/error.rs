use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value in tensor `{tensor}`")]
    NonFinite { tensor: String },

    #[error("parameter `{param}` is not assigned to any block")]
    OrphanParameter { param: String },

    #[error("unknown block `{0}`")]
    UnknownBlock(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("block `{block}` is selected for update but its optimizer state is host-resident")]
    Residency { block: String },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
