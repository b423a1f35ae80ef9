use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum KapiError {
    /// A caller violated an operation's input contract.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A factorization or solve failed, or produced non-finite output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The run configuration is malformed or inconsistent.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Every candidate in a curriculum schedule failed the solvability threshold.
    #[error("no stiffness value in the schedule was solvable: {0}")]
    Unsolvable(String),
}

pub type Result<T> = std::result::Result<T, KapiError>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(KapiError::Precondition(msg.into()))
}

impl KapiError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        KapiError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
