use crate::embedding::EmbeddingError;
use crate::transcript::TranscriptError;

/// Errors raised by the scoring pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("utterance {utterance_index}: {source}")]
    Utterance {
        utterance_index: u64,
        source: EmbeddingError,
    },
    #[error("phrasing {phrasing:?}: {source}")]
    Phrasing {
        phrasing: String,
        source: EmbeddingError,
    },
    #[error("cell (phrasing {phrasing}, utterance {utterance_index}): {source}")]
    Cell {
        phrasing: usize,
        utterance_index: u64,
        source: EmbeddingError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid lexicon: {0}")]
    Lexicon(String),
    #[error("{} utterance(s) failed, first: {}", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    Aggregate(Vec<Error>),
}
