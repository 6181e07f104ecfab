use std::hash::Hasher;

use fnv::FnvHasher;

use super::{check_text, ContextualRequest, EmbeddingError, EmbeddingProvider, EmbeddingVector};

pub const DEFAULT_MOCK_DIMENSION: usize = 64;

/// Lowercased tokens with punctuation removed.
///
/// Text made only of punctuation (e.g. `"..."`) falls back to a single token of
/// the trimmed, lowercased text so every non-empty input embeds to a nonzero vector.
pub fn mock_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        vec![text.trim().to_lowercase()]
    } else {
        tokens
    }
}

/// Deterministic offline provider: hashed bag of tokens, L2-normalized.
///
/// Each token is hashed with 64-bit FNV-1a over its UTF-8 bytes and counted in
/// bucket `hash % dimension`. Contextual requests pool the target's tokens only,
/// unless a context mixing weight is set (see [`MockProvider::with_context_mixing`]).
#[derive(Debug, Clone)]
pub struct MockProvider {
    name: String,
    dimension: usize,
    context_weight: f64,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new(DEFAULT_MOCK_DIMENSION).expect("default dimension is positive")
    }
}

impl MockProvider {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::Argument(
                "mock dimension must be positive".into(),
            ));
        }
        Ok(Self {
            name: format!("mock-d{dimension}"),
            dimension,
            context_weight: 0.0,
        })
    }

    /// Mixes the context's token bag into contextual embeddings with relative
    /// weight `weight` (0 disables mixing). Useful for exercising refinement paths
    /// offline, since the plain mock ignores context entirely.
    pub fn with_context_mixing(mut self, weight: f64) -> Result<Self, EmbeddingError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(EmbeddingError::Argument(format!(
                "context weight must be finite and non-negative, got {weight}"
            )));
        }
        self.context_weight = weight;
        self.name = if weight == 0.0 {
            format!("mock-d{}", self.dimension)
        } else {
            format!("mock-d{}-ctx{weight}", self.dimension)
        };
        Ok(self)
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.dimension as u64) as usize
    }

    fn counts(&self, tokens: &[String]) -> Vec<f64> {
        let mut counts = vec![0.0; self.dimension];
        for t in tokens {
            counts[self.bucket(t)] += 1.0;
        }
        counts
    }

    fn normalized(values: Vec<f64>) -> Result<EmbeddingVector, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector::new(values.into_iter().map(|v| v / norm).collect())
    }
}

impl EmbeddingProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn supports_contextual(&self) -> bool {
        true
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        check_text(text)?;
        Self::normalized(self.counts(&mock_tokens(text)))
    }

    fn embed_contextual(&self, req: &ContextualRequest) -> Result<EmbeddingVector, EmbeddingError> {
        check_text(&req.target_sentence)?;
        let target = mock_tokens(&req.target_sentence);
        // Mean of one-hot token vectors; normalization makes the 1/n factor vanish,
        // so the unmixed case goes through exactly the same arithmetic as `embed`.
        let mut pooled = self.counts(&target);
        let context: Vec<String> = req
            .context_sentences
            .iter()
            .filter(|s| !s.trim().is_empty())
            .flat_map(|s| mock_tokens(s))
            .collect();
        if self.context_weight > 0.0 && !context.is_empty() {
            let scale = self.context_weight * target.len() as f64 / context.len() as f64;
            for (p, c) in pooled.iter_mut().zip(self.counts(&context)) {
                *p += scale * c;
            }
        }
        Self::normalized(pooled)
    }
}
