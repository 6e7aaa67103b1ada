use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::template::prompt_hash;
use super::provider::{Provider, ProviderConfig, ProviderError};
use super::rate::RateLimiter;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("embedding input {0} is empty")]
    EmptyText(usize),
    #[error("blocked by safety filter: {0}")]
    SafetyBlocked(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: ProviderError },
    #[error(transparent)]
    Provider(ProviderError),
    #[error("invalid embedding response: {0}")]
    InvalidEmbedding(String),
}

/// Generated text plus how many retries it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

/// Provenance stored with every generated artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub provider: String,
    pub model: String,
    pub seed: Option<u64>,
    pub timestamp: DateTime<Utc>,
    /// SHA-256 of the exact prompt sent.
    pub prompt_hash: String,
    pub retries: u32,
    /// Sampling settings; empty means provider defaults.
    pub sampling: String,
}

/// Shared entry point for all model calls.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    config: ProviderConfig,
    limiter: Option<Arc<RateLimiter>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.id())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: ProviderConfig) -> Self {
        Gateway {
            provider,
            config,
            limiter: None,
        }
    }

    pub fn with_rate_limit(mut self, per_second: f64) -> Self {
        self.limiter = Some(Arc::new(RateLimiter::new(per_second)));
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    /// Metadata for a generation made from `prompt`.
    pub fn run_metadata(&self, prompt: &str, retries: u32) -> RunMetadata {
        RunMetadata {
            provider: self.provider.id().to_string(),
            model: self.config.generation_model.clone(),
            seed: self.config.seed,
            timestamp: Utc::now(),
            prompt_hash: prompt_hash(prompt),
            retries,
            sampling: String::new(),
        }
    }

    fn call<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<(T, u32), GatewayError> {
        let mut retries = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match op() {
                Ok(v) => return Ok((v, retries)),
                Err(ProviderError::SafetyBlocked(msg)) => {
                    return Err(GatewayError::SafetyBlocked(msg))
                }
                Err(e) if !e.is_retryable() => return Err(GatewayError::Provider(e)),
                Err(e) if retries >= self.config.max_retries => {
                    return Err(GatewayError::Exhausted {
                        attempts: retries + 1,
                        last: e,
                    })
                }
                Err(e) => {
                    let wait = match &e {
                        ProviderError::RateLimited {
                            retry_after: Some(d),
                        } => *d,
                        _ => self.config.backoff(retries),
                    };
                    log::warn!("provider call failed ({e}); retry {} in {wait:?}", retries + 1);
                    std::thread::sleep(wait);
                    retries += 1;
                }
            }
        }
    }

    pub fn generate(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let model = &self.config.generation_model;
        let (text, retries) = self.call(|| self.provider.generate(model, prompt))?;
        Ok(Completion { text, retries })
    }

    /// Returns one unit-length vector per input text.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(GatewayError::EmptyText(i));
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let model = &self.config.embedding_model;
        let (mut vectors, _) = self.call(|| self.provider.embed(model, texts))?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::InvalidEmbedding(format!(
                "{} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let dim = vectors[0].len();
        for (i, v) in vectors.iter_mut().enumerate() {
            if v.len() != dim || dim == 0 {
                return Err(GatewayError::InvalidEmbedding(format!(
                    "vector {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if !super::normalize(v) {
                return Err(GatewayError::InvalidEmbedding(format!("vector {i} is zero")));
            }
        }
        Ok(vectors)
    }
}
