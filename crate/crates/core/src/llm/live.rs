//! HTTP client for the Gemini generation and embedding endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::provider::{Provider, ProviderError};

const DEFAULT_BASE: &str = "https://generativelanguage.googleapis.com/v1beta";

pub struct GeminiProvider {
    client: reqwest::blocking::Client,
    api_key: String,
    base_url: String,
}

impl GeminiProvider {
    pub fn new(api_key: impl Into<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(GeminiProvider {
            client,
            api_key: api_key.into(),
            base_url: DEFAULT_BASE.to_string(),
        })
    }

    /// Reads the key from `GEMINI_API_KEY`.
    pub fn from_env(timeout: Duration) -> Result<Self, ProviderError> {
        let key = std::env::var("GEMINI_API_KEY")
            .map_err(|_| ProviderError::Auth("GEMINI_API_KEY is not set".into()))?;
        Self::new(key, timeout)
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into();
        self
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{path}", self.base_url);
        let resp = self
            .client
            .post(&url)
            .header("x-goog-api-key", &self.api_key)
            .json(body)
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        if let Some(err) = classify_status(status, retry_after, &text) {
            return Err(err);
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("bad JSON: {e}")))
    }
}

fn classify_status(status: u16, retry_after: Option<Duration>, body: &str) -> Option<ProviderError> {
    let snippet: String = body.chars().take(200).collect();
    match status {
        200..=299 => None,
        401 | 403 => Some(ProviderError::Auth(snippet)),
        408 | 500..=599 => Some(ProviderError::Transient(format!("HTTP {status}"))),
        429 => Some(ProviderError::RateLimited { retry_after }),
        _ => Some(ProviderError::Fatal(format!("HTTP {status}: {snippet}"))),
    }
}

/// Pulls the text out of a generateContent response.
pub(crate) fn parse_generation(resp: &Value) -> Result<String, ProviderError> {
    if let Some(reason) = resp
        .pointer("/promptFeedback/blockReason")
        .and_then(Value::as_str)
    {
        return Err(ProviderError::SafetyBlocked(reason.to_string()));
    }
    let candidate = resp
        .pointer("/candidates/0")
        .ok_or_else(|| ProviderError::Fatal("response has no candidates".into()))?;
    let finish = candidate
        .get("finishReason")
        .and_then(Value::as_str)
        .unwrap_or("");
    if matches!(finish, "SAFETY" | "PROHIBITED_CONTENT" | "BLOCKLIST" | "SPII") {
        return Err(ProviderError::SafetyBlocked(finish.to_string()));
    }
    let parts = candidate
        .pointer("/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Fatal(format!("candidate has no content (finish {finish:?})")))?;
    let text: String = parts
        .iter()
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    if text.is_empty() {
        return Err(ProviderError::Fatal("candidate text is empty".into()));
    }
    Ok(text)
}

pub(crate) fn parse_embeddings(resp: &Value) -> Result<Vec<Vec<f64>>, ProviderError> {
    let items = resp
        .get("embeddings")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Fatal("response has no embeddings".into()))?;
    items
        .iter()
        .map(|e| {
            e.get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::Fatal("embedding has no values".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| ProviderError::Fatal("non-numeric embedding value".into()))
                })
                .collect()
        })
        .collect()
}

impl Provider for GeminiProvider {
    fn id(&self) -> &str {
        "gemini"
    }

    fn generate(&self, model: &str, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({ "contents": [{ "role": "user", "parts": [{ "text": prompt }] }] });
        let resp = self.post(&format!("models/{model}:generateContent"), &body)?;
        parse_generation(&resp)
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let requests: Vec<Value> = texts
            .iter()
            .map(|t| json!({ "model": format!("models/{model}"), "content": { "parts": [{ "text": t }] } }))
            .collect();
        let resp = self.post(
            &format!("models/{model}:batchEmbedContents"),
            &json!({ "requests": requests }),
        )?;
        parse_embeddings(&resp)
    }
}
