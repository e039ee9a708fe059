use thiserror::Error;

/// Errors produced anywhere in the removal toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A statistical model could not be fitted (degenerate samples, empty corpus, ...).
    #[error("fit failed: {0}")]
    Fit(String),

    #[error("scoring failed: {0}")]
    Scoring(String),

    #[error("inpainting failed: {0}")]
    Inpaint(String),

    /// An external service failed. `endpoint` is the full URL that was contacted.
    #[error("backend error at {endpoint}: {message}")]
    Backend { endpoint: String, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn backend(endpoint: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend {
            endpoint: endpoint.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
