//! Simulated roundtable discussions, one per goal.
//!
//! The goal hosts, the selected talks are the participants, and a neutral
//! facilitator prompts for concrete solutions. Each goal is one generation
//! call; the advisory length in the prompt is logged, never enforced.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::TalkAnnotation;
use crate::llm::{prompt_hash, Gateway, GatewayError, PromptSet, RunMetadata};
use crate::retrieval::{select_participants, EmbeddingIndex, ParticipantSet, RetrievalError};
use crate::store::{Store, StoreError};
use crate::{Catalog, Dataset, SdgGoal};

pub const STAGE: &str = "simulate";

/// Length requested by the prompt, in words.
pub const ADVISORY_WORDS: usize = 8500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundtableTranscript {
    pub goal: u8,
    pub dataset: Dataset,
    pub participant_ids: Vec<String>,
    pub text: String,
    pub word_count: usize,
    pub run: RunMetadata,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RoundtableError {
    #[error("no participants for goal {0}")]
    NoCandidates(u8),
    #[error("goal {0} is not in the catalog")]
    UnknownGoal(u8),
    #[error("participant {0} has no annotation")]
    MissingAnnotation(String),
    #[error("simulation of goal {0} was blocked by the provider safety filter")]
    SafetyBlocked(u8),
    #[error("provider returned an empty transcript for goal {0}")]
    EmptyTranscript(u8),
    #[error("provider error while simulating goal {goal}: {source}")]
    Provider {
        goal: u8,
        #[source]
        source: GatewayError,
    },
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Participants as numbered blocks, one per talk.
pub fn kg_box(participants: &[&TalkAnnotation]) -> String {
    let mut out = String::new();
    for (i, a) in participants.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[{}] video_id: {}\n", i + 1, a.video_id));
        out.push_str(&format!("title: {}\n", one_line(&a.title)));
        out.push_str(&format!("description: {}\n", one_line(&a.description)));
        out.push_str(&format!("core_value: {}\n", one_line(&a.core_value)));
        out.push_str(&format!("key_words: {}\n", a.key_words.join(", ")));
        if !a.qa.is_empty() {
            out.push_str("qa:\n");
            for qa in &a.qa {
                out.push_str(&format!("- Q: {} A: {}\n", one_line(&qa.question), one_line(&qa.answer)));
            }
        }
    }
    out
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_prompt(goal: &SdgGoal, participants: &[&TalkAnnotation], prompts: &PromptSet) -> String {
    let n = participants.len().to_string();
    let number = goal.number.to_string();
    prompts
        .roundtable
        .render_pairs(&[
            ("type", number.as_str()),
            ("n", n.as_str()),
            ("kg_box", &kg_box(participants)),
            ("bg_box", &goal.background()),
        ])
        .expect("roundtable template slots are fixed")
}

fn resolve<'a>(
    set: &ParticipantSet,
    annotations: &'a BTreeMap<String, TalkAnnotation>,
) -> Result<Vec<&'a TalkAnnotation>, RoundtableError> {
    set.members
        .iter()
        .map(|id| {
            annotations
                .get(id)
                .ok_or_else(|| RoundtableError::MissingAnnotation(id.clone()))
        })
        .collect()
}

pub fn simulate(
    goal: &SdgGoal,
    dataset: &Dataset,
    participants: &ParticipantSet,
    annotations: &BTreeMap<String, TalkAnnotation>,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<RoundtableTranscript, RoundtableError> {
    if participants.is_empty() {
        return Err(RoundtableError::NoCandidates(goal.number));
    }
    let members = resolve(participants, annotations)?;
    let prompt = render_prompt(goal, &members, prompts);
    let completion = gateway.generate(&prompt).map_err(|e| match e {
        GatewayError::SafetyBlocked(_) => RoundtableError::SafetyBlocked(goal.number),
        source => RoundtableError::Provider {
            goal: goal.number,
            source,
        },
    })?;
    let text = completion.text.trim().to_string();
    if text.is_empty() {
        return Err(RoundtableError::EmptyTranscript(goal.number));
    }
    let words = word_count(&text);
    if words < ADVISORY_WORDS {
        log::info!("goal {} transcript has {words} words (advisory {ADVISORY_WORDS})", goal.number);
    }
    Ok(RoundtableTranscript {
        goal: goal.number,
        dataset: dataset.clone(),
        participant_ids: participants.members.clone(),
        text,
        word_count: words,
        run: gateway.run_metadata(&prompt, completion.retries),
    })
}

/// Re-renders the prompt from stored inputs and compares its hash with the
/// transcript's provenance.
pub fn prompt_matches(
    transcript: &RoundtableTranscript,
    catalog: &Catalog,
    annotations: &BTreeMap<String, TalkAnnotation>,
    prompts: &PromptSet,
) -> bool {
    let Some(goal) = catalog.goal(transcript.goal) else { return false };
    let set = ParticipantSet {
        goal: transcript.goal,
        members: transcript.participant_ids.clone(),
        scores: Vec::new(),
    };
    match resolve(&set, annotations) {
        Ok(members) => prompt_hash(&render_prompt(goal, &members, prompts)) == transcript.run.prompt_hash,
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub simulated: BTreeSet<u8>,
    pub failed: BTreeMap<u8, String>,
}

/// Simulates the requested goals (all 17 by default). Per-goal failures are
/// recorded and never abort the batch.
#[allow(clippy::too_many_arguments)]
pub fn simulate_all(
    store: &Store,
    dataset: &Dataset,
    index: &EmbeddingIndex,
    catalog: &Catalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    cap: usize,
    goals: Option<&[u8]>,
) -> Result<SimulateSummary, StoreError> {
    let annotations: BTreeMap<String, TalkAnnotation> = store
        .annotations(dataset)?
        .into_iter()
        .map(|s| (s.annotation.video_id.clone(), s.annotation))
        .collect();
    let wanted: Vec<u8> = match goals {
        Some(g) => g.to_vec(),
        None => catalog.goals().iter().map(|g| g.number).collect(),
    };
    let results: Vec<(u8, Result<RoundtableTranscript, String>)> = wanted
        .par_iter()
        .map(|&n| {
            let run = || -> Result<RoundtableTranscript, String> {
                let goal = catalog.goal(n).ok_or(RoundtableError::UnknownGoal(n).to_string())?;
                let set = select_participants(n, index, cap).map_err(|e| match e {
                    RetrievalError::NoCandidates(g) => RoundtableError::NoCandidates(g).to_string(),
                    other => other.to_string(),
                })?;
                simulate(goal, dataset, &set, &annotations, gateway, prompts).map_err(|e| e.to_string())
            };
            (n, run())
        })
        .collect();
    let mut summary = SimulateSummary::default();
    store.batch(|s| {
        for (goal, result) in results {
            let item = goal.to_string();
            match result {
                Ok(t) => {
                    s.put_transcript(&t)?;
                    s.clear_failure(dataset, STAGE, &item)?;
                    summary.simulated.insert(goal);
                }
                Err(reason) => {
                    log::warn!("goal {goal}: {reason}");
                    s.record_failure(dataset, STAGE, &item, &reason)?;
                    summary.failed.insert(goal, reason);
                }
            }
        }
        Ok::<_, StoreError>(())
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockProvider, MockRule, ProviderConfig, ProviderError, QaPair};
    use std::sync::Arc;

    fn ann(id: &str, title: &str, words: &[&str]) -> TalkAnnotation {
        TalkAnnotation {
            video_id: id.into(),
            title: title.into(),
            description: format!("A talk about {title}."),
            core_value: "Act together.".into(),
            key_words: words.iter().map(|w| w.to_string()).collect(),
            qa: (1..=5)
                .map(|i| QaPair { question: format!("Q{i}?"), answer: format!("A{i}.") })
                .collect(),
            sdg_types: [1].into(),
        }
    }

    fn fixture() -> (BTreeMap<String, TalkAnnotation>, ParticipantSet) {
        let anns = [
            ann("a", "Cash Transfers", &["basic income", "poverty"]),
            ann("b", "Microfinance", &["credit", "women"]),
            ann("c", "Safety Nets", &["social protection"]),
        ];
        let set = ParticipantSet {
            goal: 1,
            members: vec!["a".into(), "b".into(), "c".into()],
            scores: vec![0.9, 0.8, 0.7],
        };
        (anns.into_iter().map(|a| (a.video_id.clone(), a)).collect(), set)
    }

    fn gw(provider: MockProvider) -> Gateway {
        let seed = provider.seed();
        Gateway::new(Arc::new(provider), ProviderConfig { seed: Some(seed), ..Default::default() })
    }

    #[test]
    fn mock_simulation_is_deterministic() {
        let (anns, set) = fixture();
        let catalog = Catalog::bundled();
        let goal = catalog.goal(1).unwrap();
        let prompts = PromptSet::builtin();
        let t1 = simulate(goal, &Dataset::Preliminary, &set, &anns, &gw(MockProvider::new(5)), &prompts).unwrap();
        let t2 = simulate(goal, &Dataset::Preliminary, &set, &anns, &gw(MockProvider::new(5)), &prompts).unwrap();
        assert_eq!(t1.text, t2.text);
        assert!(t1.word_count > 0);
        assert_eq!(t1.participant_ids, set.members);
        assert!(prompt_matches(&t1, &catalog, &anns, &prompts));
    }

    #[test]
    fn prompt_names_participant_count() {
        let (anns, set) = fixture();
        let catalog = Catalog::bundled();
        let members: Vec<&TalkAnnotation> = set.members.iter().map(|m| &anns[m]).collect();
        let prompt = render_prompt(catalog.goal(1).unwrap(), &members, &PromptSet::builtin());
        assert!(prompt.contains("totaling 3 participants"));
        assert!(prompt.contains("【SDGs Goal 1】"));
        assert!(prompt.contains("[3] video_id: c"));
        assert!(prompt.contains("SDGs Goal 1: No Poverty"));
    }

    #[test]
    fn empty_participants_rejected() {
        let (anns, _) = fixture();
        let empty = ParticipantSet { goal: 1, members: vec![], scores: vec![] };
        let catalog = Catalog::bundled();
        let err = simulate(
            catalog.goal(1).unwrap(),
            &Dataset::Preliminary,
            &empty,
            &anns,
            &gw(MockProvider::new(1)),
            &PromptSet::builtin(),
        )
        .unwrap_err();
        assert_eq!(err, RoundtableError::NoCandidates(1));
    }

    #[test]
    fn safety_block_is_reported_per_goal() {
        let (anns, set) = fixture();
        let provider = MockProvider::new(1).with_rule(MockRule::fail(
            "Cash Transfers",
            ProviderError::SafetyBlocked("SAFETY".into()),
        ));
        let catalog = Catalog::bundled();
        let err = simulate(catalog.goal(1).unwrap(), &Dataset::Preliminary, &set, &anns, &gw(provider), &PromptSet::builtin())
            .unwrap_err();
        assert_eq!(err, RoundtableError::SafetyBlocked(1));
    }

    #[test]
    fn words_are_whitespace_tokens() {
        assert_eq!(word_count("  one two\nthree\t four "), 4);
        assert_eq!(word_count(""), 0);
    }
}
