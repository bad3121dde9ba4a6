use std::path::PathBuf;

/// Errors raised by the pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: {message}{}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    Format {
        context: String,
        frame: Option<usize>,
        message: String,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no descriptor for video `{0}`")]
    MissingDescriptor(String),
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, frame: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            frame,
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }

    /// True for errors caused by bad configuration or arguments rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
