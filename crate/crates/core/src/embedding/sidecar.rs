//! HTTP client for the embedding sidecar service.
//!
//! Wire protocol (JSON bodies, decimal floats):
//!
//! | request                     | body                                        | response                                          |
//! |-----------------------------|---------------------------------------------|---------------------------------------------------|
//! | `POST /embed`               | `{"texts": [..]}`                           | `{"vectors": [[..]], "dimension", "model_id"}`    |
//! | `POST /embed_contextual`    | `{"context_sentences": [..], "target_sentence"}` | `{"vector": [..], "dimension", "target_token_count"}` |
//! | `GET /health`               |                                             | `{"status", "model_id", "dimension"}`             |

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{check_text, ContextualRequest, EmbeddingError, EmbeddingProvider, EmbeddingVector};

/// Environment variable that overrides the configured sidecar endpoint.
pub const SIDECAR_ENDPOINT_ENV: &str = "COMMSCORE_SIDECAR_ENDPOINT";

const DEFAULT_MAX_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHealth {
    pub status: String,
    pub model_id: String,
    pub dimension: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dimension: usize,
    model_id: String,
}

#[derive(Deserialize)]
struct ContextualResponse {
    vector: Vec<f64>,
    dimension: usize,
    target_token_count: usize,
}

/// Provider backed by a running sidecar. The model id and dimension are pinned
/// from `/health` at connect time and every response is checked against them.
#[derive(Debug, Clone)]
pub struct SidecarProvider {
    client: Client,
    endpoint: String,
    name: String,
    model_id: String,
    dimension: usize,
    max_batch: usize,
}

fn transport(err: reqwest::Error) -> EmbeddingError {
    EmbeddingError::Transport {
        message: err.to_string(),
        retryable: err.is_connect() || err.is_timeout() || err.is_request(),
    }
}

fn check_status(resp: Response) -> Result<Response, EmbeddingError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    let message = format!("sidecar answered {status}: {}", body.trim());
    Err(match status {
        StatusCode::UNPROCESSABLE_ENTITY => EmbeddingError::Argument(message),
        StatusCode::SERVICE_UNAVAILABLE => EmbeddingError::Transport {
            message,
            retryable: true,
        },
        s => EmbeddingError::Transport {
            message,
            retryable: s.is_server_error(),
        },
    })
}

impl SidecarProvider {
    /// Connects to the sidecar at `endpoint` (e.g. `http://127.0.0.1:8088`) and
    /// reads its model id and dimension from `/health`.
    pub fn connect(endpoint: &str) -> Result<Self, EmbeddingError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(transport)?;
        let endpoint = endpoint.trim_end_matches('/').to_string();
        let resp = client
            .get(format!("{endpoint}/health"))
            .send()
            .map_err(transport)?;
        let health: SidecarHealth = check_status(resp)?
            .json()
            .map_err(|e| EmbeddingError::Response(e.to_string()))?;
        if health.status != "ok" {
            return Err(EmbeddingError::Transport {
                message: format!("sidecar status is {:?}", health.status),
                retryable: true,
            });
        }
        if health.dimension == 0 {
            return Err(EmbeddingError::Response("sidecar reports dimension 0".into()));
        }
        Ok(Self {
            client,
            name: format!("sidecar:{}", health.model_id),
            endpoint,
            model_id: health.model_id,
            dimension: health.dimension,
            max_batch: DEFAULT_MAX_BATCH,
        })
    }

    /// Connects using [`SIDECAR_ENDPOINT_ENV`] when set, `fallback` otherwise.
    pub fn from_env_or(fallback: &str) -> Result<Self, EmbeddingError> {
        match std::env::var(SIDECAR_ENDPOINT_ENV) {
            Ok(endpoint) if !endpoint.trim().is_empty() => Self::connect(endpoint.trim()),
            _ => Self::connect(fallback),
        }
    }

    /// Largest number of texts sent in one `/embed` call.
    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vector(&self, values: Vec<f64>) -> Result<EmbeddingVector, EmbeddingError> {
        if values.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dimension,
                right: values.len(),
            });
        }
        EmbeddingVector::new(values).map_err(|e| EmbeddingError::Response(e.to_string()))
    }

    fn post_embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let resp = self
            .client
            .post(format!("{}/embed", self.endpoint))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(transport)?;
        let body: EmbedResponse = check_status(resp)?
            .json()
            .map_err(|e| EmbeddingError::Response(e.to_string()))?;
        if body.model_id != self.model_id {
            return Err(EmbeddingError::Response(format!(
                "model changed from {} to {}",
                self.model_id, body.model_id
            )));
        }
        if body.dimension != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dimension,
                right: body.dimension,
            });
        }
        if body.vectors.len() != texts.len() {
            return Err(EmbeddingError::Response(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors.into_iter().map(|v| self.vector(v)).collect()
    }
}

impl EmbeddingProvider for SidecarProvider {
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
        Ok(self.post_embed(&[text])?.remove(0))
    }

    fn embed_contextual(&self, req: &ContextualRequest) -> Result<EmbeddingVector, EmbeddingError> {
        check_text(&req.target_sentence)?;
        let resp = self
            .client
            .post(format!("{}/embed_contextual", self.endpoint))
            .json(req)
            .send()
            .map_err(transport)?;
        let body: ContextualResponse = check_status(resp)?
            .json()
            .map_err(|e| EmbeddingError::Response(e.to_string()))?;
        if body.target_token_count == 0 {
            return Err(EmbeddingError::Response(
                "sidecar pooled zero target tokens".into(),
            ));
        }
        if body.dimension != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dimension,
                right: body.dimension,
            });
        }
        self.vector(body.vector)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let failures: Vec<(usize, EmbeddingError)> = texts
            .iter()
            .enumerate()
            .filter_map(|(pos, t)| check_text(t).err().map(|e| (pos, e)))
            .collect();
        if !failures.is_empty() {
            return Err(EmbeddingError::Batch { failures });
        }
        let mut out = Vec::with_capacity(texts.len());
        for (chunk_no, chunk) in texts.chunks(self.max_batch).enumerate() {
            let vectors = self.post_embed(chunk).map_err(|e| EmbeddingError::Batch {
                failures: vec![(chunk_no * self.max_batch, e)],
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}
