use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line front-end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Parse,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("no layout satisfied the aspect-ratio constraint after {retries} attempts")]
    LayoutUnsatisfiable { retries: u32 },

    #[error("no pool image fits alone in a band of {band_extent}px x {band_length}px")]
    PoolExhausted { band_extent: u32, band_length: u32 },

    #[error("non-finite loss component `{0}`")]
    NonFinite(&'static str),

    #[error("figure {index}: {source}")]
    Figure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. } => ErrorCategory::Config,
            Error::Parse { .. } | Error::Json { .. } => ErrorCategory::Parse,
            Error::Image {
                source: image::ImageError::Decoding(_),
                ..
            } => ErrorCategory::Parse,
            Error::Figure { source, .. } => source.category(),
            _ => ErrorCategory::Runtime,
        }
    }
}
