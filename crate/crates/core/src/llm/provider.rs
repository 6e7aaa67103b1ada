use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("rate limited by provider")]
    RateLimited { retry_after: Option<Duration> },
    #[error("response blocked by provider safety filter: {0}")]
    SafetyBlocked(String),
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    #[error("provider error: {0}")]
    Fatal(String),
}

impl ProviderError {
    /// Only transport hiccups and rate limits are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ProviderError::Transient(_) | ProviderError::RateLimited { .. }
        )
    }
}

/// A text generation and embedding backend.
pub trait Provider: Send + Sync {
    /// Short identifier recorded in run metadata ("mock", "gemini").
    fn id(&self) -> &str;

    fn generate(&self, model: &str, prompt: &str) -> Result<String, ProviderError>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub generation_model: String,
    pub embedding_model: String,
    pub max_retries: u32,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
    /// Mock provider seed; ignored by live providers.
    pub seed: Option<u64>,
    /// First backoff delay in milliseconds; doubles per retry.
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            generation_model: "gemini-1.5-pro-latest".into(),
            embedding_model: "text-embedding-004".into(),
            max_retries: 3,
            timeout_secs: 120,
            seed: None,
            backoff_base_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}
