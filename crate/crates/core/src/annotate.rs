//! Talk summaries and goal tags.
//!
//! Each usable talk is sent through the annotation prompt with only its own
//! transcript as context. A rejected answer gets one corrective re-prompt;
//! a second rejection demotes the talk with `AnnotationFailed`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{SkipReason, TalkRecord};
use crate::llm::{
    corrective_prompt, parse_as, AnnotationDoc, Gateway, GatewayError, PromptSet, QaPair, RunMetadata,
    StructuredError,
};
use crate::store::{Store, StoreError};
use crate::Dataset;

pub const STAGE: &str = "annotate";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TalkAnnotation {
    pub video_id: String,
    pub title: String,
    pub description: String,
    pub core_value: String,
    pub key_words: Vec<String>,
    pub qa: Vec<QaPair>,
    pub sdg_types: BTreeSet<u8>,
}

impl TalkAnnotation {
    pub fn from_doc(video_id: &str, doc: AnnotationDoc) -> Result<Self, StructuredError> {
        doc.validate()?;
        Ok(TalkAnnotation {
            video_id: video_id.to_string(),
            title: doc.title,
            description: doc.description,
            core_value: doc.core_value,
            key_words: doc
                .key_words
                .into_iter()
                .map(|k| k.trim().to_string())
                .filter(|k| !k.is_empty())
                .collect(),
            qa: doc.qa,
            sdg_types: doc.sdg_types.into_iter().map(|t| t as u8).collect(),
        })
    }

    pub fn check(&self) -> Result<(), StructuredError> {
        if self.qa.len() != 5 {
            return Err(StructuredError::violation("qa", "expected exactly 5 pairs"));
        }
        if self.sdg_types.is_empty() {
            return Err(StructuredError::violation("sdg_types", "no goal tags"));
        }
        if let Some(t) = self.sdg_types.iter().find(|t| !(1..=17).contains(*t)) {
            return Err(StructuredError::violation("sdg_types", format!("{t} is outside 1..17")));
        }
        if self.key_words.is_empty() {
            return Err(StructuredError::violation("key_words", "no keywords"));
        }
        Ok(())
    }

    /// Text used for the retrieval embedding.
    pub fn embedding_text(&self) -> String {
        format!(
            "{}\n{}\n{}\n{}",
            self.title,
            self.description,
            self.core_value,
            self.key_words.join(", ")
        )
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnnotateError {
    #[error("talk {0} is not usable or has no transcript")]
    NotUsable(String),
    #[error("annotation of {video_id} failed after a corrective re-prompt: {reason}")]
    AnnotationFailed { video_id: String, reason: StructuredError },
    #[error("annotation of {0} was blocked by the provider safety filter")]
    SafetyBlocked(String),
    #[error("provider error while annotating {video_id}: {source}")]
    Provider {
        video_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("dataset has no annotations")]
    EmptyDataset,
}

/// The `tedtalk_data` block for one talk.
pub fn talk_data(record: &TalkRecord) -> String {
    format!(
        "video_id: {}\ntitle: {}\nchannel: {}\npublished_at: {}\nduration_secs: {}\ntranscript:\n{}",
        record.video_id,
        record.title,
        record.channel,
        record.published_at.to_rfc3339(),
        record.duration_secs,
        record.transcript.as_deref().unwrap_or("").trim()
    )
}

fn attempt(gateway: &Gateway, video_id: &str, prompt: &str) -> Result<(Result<TalkAnnotation, StructuredError>, u32), AnnotateError> {
    let completion = gateway.generate(prompt).map_err(|e| match e {
        GatewayError::SafetyBlocked(_) => AnnotateError::SafetyBlocked(video_id.to_string()),
        source => AnnotateError::Provider {
            video_id: video_id.to_string(),
            source,
        },
    })?;
    let parsed = parse_as::<AnnotationDoc>(&completion.text)
        .and_then(|doc| TalkAnnotation::from_doc(video_id, doc));
    Ok((parsed, completion.retries))
}

/// Annotates one talk, re-prompting once on a rejected answer.
pub fn annotate_talk(
    record: &TalkRecord,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<(TalkAnnotation, RunMetadata), AnnotateError> {
    let id = &record.video_id;
    if !record.usable || record.transcript.as_deref().is_none_or(|t| t.trim().is_empty()) {
        return Err(AnnotateError::NotUsable(id.clone()));
    }
    let prompt = prompts
        .annotate
        .render_pairs(&[("tedtalk_data", &talk_data(record))])
        .expect("annotate template has one slot");
    let (first, retries) = attempt(gateway, id, &prompt)?;
    let reason = match first {
        Ok(a) => return Ok((a, gateway.run_metadata(&prompt, retries))),
        Err(reason) => reason,
    };
    log::info!("re-prompting annotation of {id}: {reason}");
    let retry_prompt = corrective_prompt(&prompt, &reason.to_string());
    let (second, retries) = attempt(gateway, id, &retry_prompt)?;
    match second {
        Ok(a) => Ok((a, gateway.run_metadata(&retry_prompt, retries))),
        Err(reason) => Err(AnnotateError::AnnotationFailed {
            video_id: id.clone(),
            reason,
        }),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub annotated: usize,
    pub already_done: usize,
    pub failed: usize,
    pub safety_blocked: usize,
    pub provider_errors: usize,
}

/// Annotates every usable talk of `dataset` that has no annotation yet.
/// Generation runs in parallel; results are written by this thread.
pub fn annotate_dataset(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<AnnotateSummary, StoreError> {
    let done: BTreeSet<String> = store
        .annotations(dataset)?
        .into_iter()
        .map(|a| a.annotation.video_id)
        .collect();
    let mut summary = AnnotateSummary::default();
    let todo: Vec<TalkRecord> = store
        .talks(dataset)?
        .into_iter()
        .filter(|t| t.usable)
        .filter(|t| {
            let skip = done.contains(&t.video_id);
            if skip {
                summary.already_done += 1;
            }
            !skip
        })
        .collect();
    let results: Vec<_> = todo
        .par_iter()
        .map(|t| annotate_talk(t, gateway, prompts))
        .collect();
    store.batch(|s| {
        for (talk, result) in todo.iter().zip(results) {
            let id = &talk.video_id;
            match result {
                Ok((a, run)) => {
                    s.put_annotation(dataset, &a, &run)?;
                    s.clear_failure(dataset, STAGE, id)?;
                    summary.annotated += 1;
                }
                Err(e @ AnnotateError::AnnotationFailed { .. }) => {
                    s.demote_talk(dataset, id, SkipReason::AnnotationFailed)?;
                    s.record_failure(dataset, STAGE, id, &e.to_string())?;
                    summary.failed += 1;
                }
                Err(e @ AnnotateError::SafetyBlocked(_)) => {
                    s.demote_talk(dataset, id, SkipReason::SafetyBlocked)?;
                    s.record_failure(dataset, STAGE, id, &e.to_string())?;
                    summary.safety_blocked += 1;
                }
                Err(e) => {
                    log::warn!("{e}");
                    s.record_failure(dataset, STAGE, id, &e.to_string())?;
                    summary.provider_errors += 1;
                }
            }
        }
        Ok::<_, StoreError>(())
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub talks: usize,
    pub total_tags: usize,
    pub mean_tags_per_talk: f64,
    /// Talks carrying each goal, for all 17 goals.
    pub per_goal_counts: BTreeMap<u8, usize>,
}

/// Tag totals over a set of talks. Each talk contributes one tag per goal.
pub fn tag_statistics<'a, I>(tag_sets: I) -> Result<TagStats, AnnotateError>
where
    I: IntoIterator<Item = &'a BTreeSet<u8>>,
{
    let mut per_goal_counts: BTreeMap<u8, usize> = crate::goal_numbers().map(|g| (g, 0)).collect();
    let mut talks = 0;
    let mut total_tags = 0;
    for set in tag_sets {
        talks += 1;
        total_tags += set.len();
        for g in set {
            *per_goal_counts.entry(*g).or_default() += 1;
        }
    }
    if talks == 0 {
        return Err(AnnotateError::EmptyDataset);
    }
    Ok(TagStats {
        talks,
        total_tags,
        mean_tags_per_talk: total_tags as f64 / talks as f64,
        per_goal_counts,
    })
}
