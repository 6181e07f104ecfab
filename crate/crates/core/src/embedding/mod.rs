//! Sentence embeddings behind a pluggable provider boundary.
//!
//! Three providers ship with the crate: a hashed bag-of-tokens [`MockProvider`]
//! for offline work, a [`SidecarProvider`] that talks to an embedding service
//! over HTTP, and a [`CachedProvider`] decorator that memoizes either of them
//! in a content-addressed file.

mod cache;
mod mock;
mod sidecar;

pub use cache::{CacheKey, CachedProvider};
pub use mock::{mock_tokens, MockProvider, DEFAULT_MOCK_DIMENSION};
pub use sidecar::{SidecarHealth, SidecarProvider, SIDECAR_ENDPOINT_ENV};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("provider unavailable: {message}")]
    Transport { message: String, retryable: bool },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("provider {provider:?} does not support {capability}")]
    Capability {
        provider: String,
        capability: &'static str,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error("{} item(s) of the batch failed (first at position {})", failures.len(), failures.first().map_or(0, |f| f.0))]
    Batch {
        failures: Vec<(usize, EmbeddingError)>,
    },
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transport { retryable: true, .. })
    }
}

/// A fixed-dimension, nonzero, finite vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Argument("empty embedding vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Argument(
                "embedding vector has non-finite components".into(),
            ));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(EmbeddingError::Argument("zero embedding vector".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every component by `k`. Fails when the result would be zero.
    pub fn scaled(&self, k: f64) -> Result<Self, EmbeddingError> {
        Self::new(self.values.iter().map(|v| v * k).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Target sentence plus the conversation that preceded it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextualRequest {
    pub context_sentences: Vec<String>,
    pub target_sentence: String,
}

impl ContextualRequest {
    pub fn new(
        context_sentences: Vec<String>,
        target_sentence: impl Into<String>,
    ) -> Result<Self, EmbeddingError> {
        let target_sentence = target_sentence.into();
        check_text(&target_sentence)?;
        Ok(Self {
            context_sentences,
            target_sentence,
        })
    }
}

/// Anything that maps sentences to vectors.
///
/// Implementations must be deterministic: the same text always produces the same
/// vector within one provider instance.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn supports_contextual(&self) -> bool {
        false
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;

    /// Embeds the target sentence after reading the context, pooling only the
    /// target's token embeddings.
    fn embed_contextual(
        &self,
        _req: &ContextualRequest,
    ) -> Result<EmbeddingVector, EmbeddingError> {
        Err(EmbeddingError::Capability {
            provider: self.name().to_string(),
            capability: "contextual embedding",
        })
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        let mut failures = Vec::new();
        for (pos, text) in texts.iter().enumerate() {
            match self.embed(text) {
                Ok(v) => out.push(v),
                Err(e) => failures.push((pos, e)),
            }
        }
        if failures.is_empty() {
            Ok(out)
        } else {
            Err(EmbeddingError::Batch { failures })
        }
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn supports_contextual(&self) -> bool {
        (**self).supports_contextual()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_contextual(&self, req: &ContextualRequest) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed_contextual(req)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn supports_contextual(&self) -> bool {
        (**self).supports_contextual()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_contextual(&self, req: &ContextualRequest) -> Result<EmbeddingVector, EmbeddingError> {
        (**self).embed_contextual(req)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

pub(crate) fn check_text(text: &str) -> Result<(), EmbeddingError> {
    if text.trim().is_empty() {
        Err(EmbeddingError::Argument("text must not be empty".into()))
    } else {
        Ok(())
    }
}

/// Absolute cosine similarity, `|<a|b>| / (|a| |b|)`, clamped into `[0, 1]`.
pub fn cosine_sim(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine_sim_slices(a.values(), b.values())
}

/// [`cosine_sim`] over raw slices.
pub fn cosine_sim_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(EmbeddingError::Argument("zero-norm vector".into()));
    }
    let sim = dot.abs() / (aa.sqrt() * bb.sqrt());
    Ok(sim.clamp(0.0, 1.0))
}
