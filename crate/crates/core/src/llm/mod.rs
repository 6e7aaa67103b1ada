//! Text generation and embedding behind one interface.
//!
//! Callers talk to a [`Gateway`], which owns a [`Provider`], a retry policy
//! and an optional rate limiter. Prompts come from [`PromptSet`] and model
//! output is decoded with [`parse_structured`].

mod gateway;
mod live;
mod mock;
mod provider;
mod rate;
mod structured;
mod template;

pub use gateway::{Completion, Gateway, GatewayError, RunMetadata};
pub use live::GeminiProvider;
pub use mock::{MockProvider, MockReply, MockRule, MOCK_EMBEDDING_DIM};
pub use provider::{Provider, ProviderConfig, ProviderError};
pub use rate::RateLimiter;
pub use structured::{
    extract_json, parse_as, parse_structured, to_fenced, AnnotationDoc, DocKind, KgDoc, NewGoalsDoc,
    ParsedDoc, QaPair, RawIndicator, RawLink, RawNode, RawProposal, RawSubGoal, Relationship,
    StructuredError,
};
pub use template::{prompt_hash, PromptSet, PromptTemplate, TemplateError, TemplateName};

/// Opening words of every corrective re-prompt.
pub const CORRECTION_MARKER: &str = "Your previous answer was rejected";

/// Appends a correction request to `prompt` after a rejected answer.
pub fn corrective_prompt(prompt: &str, reason: &str) -> String {
    format!("{prompt}\n\n{CORRECTION_MARKER}: {reason}. Return the corrected JSON document only.")
}

/// Cosine similarity of two equal-length vectors; 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Scales `v` to unit length in place. Returns false for a zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}
