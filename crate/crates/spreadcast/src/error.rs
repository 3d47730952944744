use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] spreadcast_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("http error for {url}: {message}")]
    Http { url: String, message: String },
    #[error("{missing} of {total} download slots could not be fetched (first: {first})")]
    PartialDownload {
        missing: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Whether the failure traces back to the caller's inputs (bad config,
    /// missing or malformed files) rather than to a defect or the network.
    pub fn is_user_error(&self) -> bool {
        use spreadcast_core::Error as C;
        match self {
            Error::Config(_) | Error::Format { .. } | Error::Io { .. } => true,
            Error::Core(e) => matches!(
                e,
                C::Alignment(_)
                    | C::Shape(_)
                    | C::Parameter(_)
                    | C::Config(_)
                    | C::NonPositive { .. }
                    | C::DegenerateScale
                    | C::Parse { .. }
                    | C::OutOfCalendar(_)
            ),
            Error::Http { .. } | Error::PartialDownload { .. } => false,
        }
    }
}
