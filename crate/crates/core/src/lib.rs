//! Scoring of team voice communications.
//!
//! Transcripts of speaker-diarized voice chat are scored for two problems:
//!
//! * **duplicate communications**: an utterance that repeats, in meaning, something
//!   the same speaker said in the last few seconds ([`duplicate`]);
//! * **parasite communications**: hesitant or noisy phrasing, measured against a
//!   lexicon of unwanted phrasings ([`parasite`]).
//!
//! Scores are cosine similarities between sentence embeddings supplied by an
//! [`embedding::EmbeddingProvider`]. The [`evaluation`] module compares flags
//! with human labels and [`report`] serializes everything.

pub mod duplicate;
pub mod embedding;
pub mod evaluation;
pub mod parasite;
pub mod report;
pub mod transcript;

mod error;

pub use error::Error;
