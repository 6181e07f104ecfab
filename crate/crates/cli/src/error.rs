use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use commscore::embedding::EmbeddingError;
use commscore::evaluation::EvaluationError;
use commscore::transcript::TranscriptError;
use commscore::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_PROVIDER: u8 = 4;
pub const EXIT_IO: u8 = 5;
pub const EXIT_VALIDATION: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => EXIT_IO,
            Self::Parse(_) => EXIT_PARSE,
            Self::Provider(_) => EXIT_PROVIDER,
            Self::Validation(_) => EXIT_VALIDATION,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn transcript(path: &Path, e: TranscriptError) -> Self {
        match e {
            TranscriptError::Parse { .. }
            | TranscriptError::InvertedSpan { .. }
            | TranscriptError::EmptyText { .. }
            | TranscriptError::IndexOrder { .. } => Self::Parse(format!("{}: {e}", path.display())),
            TranscriptError::Io(msg) => Self::Io {
                path: path.to_path_buf(),
                source: io::Error::other(msg),
            },
            other => Self::Validation(other.to_string()),
        }
    }

    pub fn labels(path: &Path, e: EvaluationError) -> Self {
        match e {
            EvaluationError::Parse { .. } => Self::Parse(format!("{}: {e}", path.display())),
            other => Self::Validation(format!("{}: {other}", path.display())),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        Self::Provider(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Transcript(t) => match t {
                TranscriptError::Io(msg) => Self::Validation(msg),
                other => Self::Validation(other.to_string()),
            },
            Error::Embedding(_) | Error::Utterance { .. } | Error::Phrasing { .. } | Error::Cell { .. } => {
                Self::Provider(e.to_string())
            }
            Error::Aggregate(ref errors) => match errors.first() {
                Some(first) => {
                    let code = Self::from(first.clone());
                    code.with_message(e.to_string())
                }
                None => Self::Validation(e.to_string()),
            },
            Error::Config(_) | Error::Lexicon(_) => Self::Validation(e.to_string()),
        }
    }
}

impl CliError {
    fn with_message(self, message: String) -> Self {
        match self {
            Self::Io { path, source } => Self::Io {
                path,
                source: io::Error::new(source.kind(), message),
            },
            Self::Parse(_) => Self::Parse(message),
            Self::Provider(_) => Self::Provider(message),
            Self::Validation(_) => Self::Validation(message),
        }
    }
}

/// Lists files written so the caller can print them.
pub struct Written(pub Vec<PathBuf>);

impl fmt::Display for Written {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}
