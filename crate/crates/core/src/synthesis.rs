//! New goal proposals mined from the overlay of all 17 graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kg::KnowledgeGraph;
use crate::llm::{
    corrective_prompt, parse_as, Gateway, GatewayError, NewGoalsDoc, PromptSet, RawProposal, Relationship,
    RunMetadata, StructuredError,
};
use crate::store::{Store, StoreError};
use crate::{Catalog, Dataset};

pub const STAGE: &str = "synthesize";
pub const FIRST_NEW_GOAL: u32 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicator {
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoal {
    pub code: String,
    pub description: String,
    pub indicators: Vec<Indicator>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewGoalProposal {
    pub number: u32,
    pub title: String,
    pub sub_goals: Vec<SubGoal>,
    pub source_goals: BTreeSet<u8>,
    /// The proposal's own source field, verbatim.
    pub source: String,
    pub rationale: String,
}

impl NewGoalProposal {
    pub fn label(&self) -> String {
        format!("Goal {}: {}", self.number, self.title)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("dataset has {found} of 17 graphs")]
    IncompleteDataset { found: usize },
    #[error("synthesis failed after a corrective re-prompt: {0}")]
    SynthesisFailed(StructuredError),
    #[error("synthesis was blocked by the provider safety filter")]
    SafetyBlocked,
    #[error("provider error during synthesis: {0}")]
    Provider(GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn goal_heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)goal\s+(\d+)\s*[:.\-]\s*(.+)").expect("valid regex"))
}

fn goal_mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bgoals?\s+(\d{1,2})\b").expect("valid regex"))
}

/// Splits a heading such as "Goal 18: Title" or "**【SDGs Goal 18. Title】**".
pub fn parse_goal_heading(s: &str) -> Option<(u32, String)> {
    let cleaned: String = s.replace("**", "").replace(['【', '】'], " ");
    let caps = goal_heading_re().captures(&cleaned)?;
    let number = caps[1].parse().ok()?;
    let title = caps[2].trim().trim_end_matches('.').trim().to_string();
    (!title.is_empty()).then_some((number, title))
}

/// Existing goal numbers (1..17) mentioned as "Goal N" in `text`.
pub fn mentioned_goals(text: &str) -> BTreeSet<u8> {
    goal_mention_re()
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<u8>().ok())
        .filter(|g| (1..=17).contains(g))
        .collect()
}

fn code_ok(code: &str, prefix: &str) -> bool {
    code.strip_prefix(prefix)
        .and_then(|r| r.strip_prefix('.'))
        .is_some_and(|r| !r.is_empty() && r.chars().all(|c| c.is_ascii_digit()))
}

fn convert(i: usize, raw: RawProposal, relationships: &[Relationship]) -> Result<NewGoalProposal, StructuredError> {
    let at = |field: &str| format!("results[{i}].{field}");
    let (number, title) = parse_goal_heading(&raw.goal)
        .ok_or_else(|| StructuredError::violation(at("goal"), format!("{:?} is not \"Goal N: Title\"", raw.goal)))?;
    if number < FIRST_NEW_GOAL {
        return Err(StructuredError::violation(at("goal"), format!("number {number} is below 18")));
    }
    let expected = FIRST_NEW_GOAL + i as u32;
    if number != expected {
        return Err(StructuredError::violation(at("goal"), format!("number {number}, expected {expected}")));
    }
    let mut source_goals = mentioned_goals(&raw.source);
    if source_goals.len() < 2 {
        source_goals.extend(mentioned_goals(&raw.description));
    }
    if source_goals.len() < 2 {
        return Err(StructuredError::violation(at("source"), "fewer than 2 source goals"));
    }
    if raw.sub_goals.is_empty() {
        return Err(StructuredError::violation(at("sub_goals"), "no sub-goals"));
    }
    let prefix = number.to_string();
    let mut sub_goals = Vec::with_capacity(raw.sub_goals.len());
    for (k, s) in raw.sub_goals.into_iter().enumerate() {
        let code = s.code.trim().to_string();
        if !code_ok(&code, &prefix) {
            return Err(StructuredError::violation(
                format!("results[{i}].sub_goals[{k}].code"),
                format!("{code:?} does not follow {number}.k"),
            ));
        }
        if s.indicators.is_empty() {
            return Err(StructuredError::violation(
                format!("results[{i}].sub_goals[{k}].indicators"),
                "no indicators",
            ));
        }
        let mut indicators = Vec::with_capacity(s.indicators.len());
        for (m, ind) in s.indicators.into_iter().enumerate() {
            let icode = ind.code.trim().to_string();
            if !code_ok(&icode, &code) {
                return Err(StructuredError::violation(
                    format!("results[{i}].sub_goals[{k}].indicators[{m}].code"),
                    format!("{icode:?} does not follow {code}.m"),
                ));
            }
            indicators.push(Indicator { code: icode, description: ind.description.trim().to_string() });
        }
        sub_goals.push(SubGoal { code, description: s.description.trim().to_string(), indicators });
    }
    // Keep relationship explanations covering the same goals verbatim.
    let mut rationale = raw.description.trim().to_string();
    for r in relationships {
        let goals: BTreeSet<u8> = r.goals.iter().filter_map(|g| u8::try_from(*g).ok()).collect();
        if goals == source_goals && !rationale.contains(r.explanation.trim()) {
            if !rationale.is_empty() {
                rationale.push('\n');
            }
            rationale.push_str(r.explanation.trim());
        }
    }
    Ok(NewGoalProposal {
        number,
        title,
        sub_goals,
        source_goals,
        source: raw.source.trim().to_string(),
        rationale,
    })
}

/// Validates a parsed document into proposals numbered 18, 19, ...
pub fn proposals_from_doc(doc: NewGoalsDoc) -> Result<Vec<NewGoalProposal>, StructuredError> {
    let NewGoalsDoc { relationships, results } = doc;
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| convert(i, r, &relationships))
        .collect()
}

/// Parses raw model output (bare JSON or prose with a fenced block).
pub fn parse_proposals(raw: &str) -> Result<Vec<NewGoalProposal>, StructuredError> {
    proposals_from_doc(parse_as::<NewGoalsDoc>(raw)?)
}

pub fn load_proposals(path: &Path) -> Result<Vec<NewGoalProposal>, StructuredError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| StructuredError::Unparseable(format!("{}: {e}", path.display())))?;
    parse_proposals(&raw)
}

/// The `kg_data` block: one section per goal with ordered nodes and links.
pub fn kg_data(graphs: &[KnowledgeGraph], catalog: &Catalog) -> String {
    let mut sorted: Vec<&KnowledgeGraph> = graphs.iter().collect();
    sorted.sort_by_key(|g| g.goal);
    let mut out = String::new();
    for g in sorted {
        if !out.is_empty() {
            out.push('\n');
        }
        let label = catalog
            .goal(g.goal)
            .map_or_else(|| format!("Goal {}", g.goal), |c| c.label());
        out.push_str(&format!("## {label}\nnodes:\n"));
        let mut nodes: Vec<_> = g.nodes.iter().collect();
        nodes.sort_by_key(|n| n.order);
        for n in nodes {
            out.push_str(&format!("{}. {} | {}\n", n.order, n.id, n.details.replace('\n', " ")));
        }
        out.push_str("links:\n");
        for l in &g.links {
            out.push_str(&format!("- {} -> {} : {}\n", l.source, l.target, l.relation));
        }
    }
    out
}

fn generate(gateway: &Gateway, prompt: &str) -> Result<(Result<Vec<NewGoalProposal>, StructuredError>, u32), SynthesisError> {
    let completion = gateway.generate(prompt).map_err(|e| match e {
        GatewayError::SafetyBlocked(_) => SynthesisError::SafetyBlocked,
        other => SynthesisError::Provider(other),
    })?;
    Ok((parse_proposals(&completion.text), completion.retries))
}

/// Generates proposals from a complete set of graphs, re-prompting once.
pub fn synthesize_graphs(
    graphs: &[KnowledgeGraph],
    catalog: &Catalog,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<(Vec<NewGoalProposal>, RunMetadata), SynthesisError> {
    let goals: BTreeSet<u8> = graphs.iter().map(|g| g.goal).collect();
    if goals.len() != crate::GOAL_COUNT {
        return Err(SynthesisError::IncompleteDataset { found: goals.len() });
    }
    let prompt = prompts
        .new_goals
        .render_pairs(&[("kg_data", &kg_data(graphs, catalog))])
        .expect("new_goals template has one slot");
    let (first, retries) = generate(gateway, &prompt)?;
    let reason = match first {
        Ok(p) => return Ok((p, gateway.run_metadata(&prompt, retries))),
        Err(e) => e,
    };
    log::info!("re-prompting synthesis: {reason}");
    let retry_prompt = corrective_prompt(&prompt, &reason.to_string());
    let (second, retries) = generate(gateway, &retry_prompt)?;
    match second {
        Ok(p) => Ok((p, gateway.run_metadata(&retry_prompt, retries))),
        Err(e) => Err(SynthesisError::SynthesisFailed(e)),
    }
}

/// Runs synthesis for a stored dataset and replaces its proposals.
pub fn synthesize(
    store: &Store,
    dataset: &Dataset,
    catalog: &Catalog,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<(Vec<NewGoalProposal>, RunMetadata), SynthesisError> {
    let graphs: Vec<KnowledgeGraph> = store.graphs(dataset)?.into_iter().map(|s| s.graph).collect();
    match synthesize_graphs(&graphs, catalog, gateway, prompts) {
        Ok((proposals, run)) => {
            store.batch(|s| {
                s.put_proposals(dataset, &proposals, Some(&run))?;
                s.clear_failure(dataset, STAGE, dataset.label())
            })?;
            Ok((proposals, run))
        }
        Err(e) => {
            store.record_failure(dataset, STAGE, dataset.label(), &e.to_string())?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalStats {
    pub count: usize,
    /// How many proposals cite each existing goal.
    pub source_goal_frequency: BTreeMap<u8, usize>,
    /// Histogram: sub-goal count to number of proposals.
    pub subgoals_per_goal: BTreeMap<usize, usize>,
    /// Histogram: indicator count to number of sub-goals.
    pub indicators_per_subgoal: BTreeMap<usize, usize>,
}

pub fn proposal_stats(proposals: &[NewGoalProposal]) -> ProposalStats {
    let mut stats = ProposalStats { count: proposals.len(), ..Default::default() };
    for p in proposals {
        for g in &p.source_goals {
            *stats.source_goal_frequency.entry(*g).or_default() += 1;
        }
        *stats.subgoals_per_goal.entry(p.sub_goals.len()).or_default() += 1;
        for s in &p.sub_goals {
            *stats.indicators_per_subgoal.entry(s.indicators.len()).or_default() += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgNode;
    use crate::llm::{to_fenced, MockProvider, ProviderConfig, RawIndicator, RawSubGoal};
    use std::sync::Arc;

    fn fixture(name: &str) -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/new_goals").join(name)
    }

    fn raw(goal: &str, source: &str) -> RawProposal {
        let n: String = goal.chars().filter(|c| c.is_ascii_digit()).collect();
        RawProposal {
            goal: goal.into(),
            sub_goals: vec![RawSubGoal {
                code: format!("{n}.1"),
                description: "d".into(),
                indicators: vec![RawIndicator { code: format!("{n}.1.1"), description: "i".into() }],
            }],
            source: source.into(),
            description: "because".into(),
        }
    }

    fn doc(results: Vec<RawProposal>) -> NewGoalsDoc {
        NewGoalsDoc { relationships: vec![], results }
    }

    #[test]
    fn headings_parse_in_several_shapes() {
        assert_eq!(parse_goal_heading("Goal 18: Inclusive Well-being"), Some((18, "Inclusive Well-being".into())));
        assert_eq!(parse_goal_heading("**【SDGs Goal 19. Water, abbreviated】**"), Some((19, "Water, abbreviated".into())));
        assert_eq!(parse_goal_heading("Inclusive Well-being"), None);
    }

    #[test]
    fn preliminary_fixture_has_one_proposal() {
        let p = load_proposals(&fixture("preliminary.json")).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].title, "Inclusive Well-being");
        assert_eq!(p[0].source_goals, [3, 10].into());
        assert_eq!(p[0].sub_goals[0].indicators[0].code, "18.1.1");
    }

    #[test]
    fn formal_fixture_stats() {
        let p = load_proposals(&fixture("formal.md")).unwrap();
        assert_eq!(p.iter().map(|p| p.number).collect::<Vec<_>>(), [18, 19, 20, 21, 22]);
        let stats = proposal_stats(&p);
        assert_eq!(stats.source_goal_frequency[&1], 3);
        assert_eq!(stats.subgoals_per_goal, [(1, 5)].into());
        assert_eq!(stats.indicators_per_subgoal, [(2, 5)].into());
    }

    #[test]
    fn number_below_eighteen_is_rejected() {
        let err = proposals_from_doc(doc(vec![raw("Goal 17: Old", "Goal 1, Goal 2")])).unwrap_err();
        assert!(matches!(err, StructuredError::SchemaViolation { ref path, .. } if path == "results[0].goal"));
    }

    #[test]
    fn numbering_must_be_consecutive() {
        let err = proposals_from_doc(doc(vec![raw("Goal 18: A", "Goal 1, Goal 2"), raw("Goal 20: B", "Goal 1, Goal 2")]))
            .unwrap_err();
        assert!(matches!(err, StructuredError::SchemaViolation { ref path, .. } if path == "results[1].goal"));
    }

    #[test]
    fn single_source_is_rejected_and_fallback_scans_description() {
        assert!(proposals_from_doc(doc(vec![raw("Goal 18: A", "Goal 3: Health")])).is_err());
        let mut r = raw("Goal 18: A", "health and equity");
        r.description = "Links Goal 3 and Goal 10.".into();
        assert_eq!(proposals_from_doc(doc(vec![r])).unwrap()[0].source_goals, [3, 10].into());
    }

    #[test]
    fn codes_must_follow_scheme() {
        let mut r = raw("Goal 18: A", "Goal 1, Goal 2");
        r.sub_goals[0].indicators[0].code = "19.1.1".into();
        assert!(proposals_from_doc(doc(vec![r])).is_err());
        let mut r = raw("Goal 18: A", "Goal 1, Goal 2");
        r.sub_goals[0].indicators.clear();
        assert!(proposals_from_doc(doc(vec![r])).is_err());
    }

    #[test]
    fn single_proposal_frequency() {
        let p = proposals_from_doc(doc(vec![raw("Goal 18: A", "Goal 3, Goal 10")])).unwrap();
        assert_eq!(proposal_stats(&p).source_goal_frequency, [(3, 1), (10, 1)].into());
    }

    fn graphs() -> Vec<KnowledgeGraph> {
        crate::goal_numbers()
            .map(|g| KnowledgeGraph {
                goal: g,
                dataset: Dataset::Formal,
                nodes: vec![
                    KgNode { id: "Shared Concept".into(), order: 1, details: "common".into() },
                    KgNode { id: format!("Topic {g}"), order: 2, details: String::new() },
                ],
                links: vec![crate::kg::KgLink {
                    source: "Shared Concept".into(),
                    target: format!("Topic {g}"),
                    relation: "frames".into(),
                }],
                provenance: None,
            })
            .collect()
    }

    #[test]
    fn kg_data_lists_sections_in_goal_order() {
        let data = kg_data(&graphs(), &Catalog::bundled());
        assert!(data.starts_with("## Goal 1: No Poverty\nnodes:\n1. Shared Concept | common\n2. Topic 1 | \nlinks:\n- Shared Concept -> Topic 1 : frames\n"));
        assert_eq!(data.matches("## Goal ").count(), 17);
    }

    #[test]
    fn mock_synthesis_numbers_from_eighteen() {
        let gw = Gateway::new(Arc::new(MockProvider::new(9)), ProviderConfig::default());
        let (p, run) = synthesize_graphs(&graphs(), &Catalog::bundled(), &gw, &PromptSet::builtin()).unwrap();
        assert!((1..=5).contains(&p.len()));
        for (i, prop) in p.iter().enumerate() {
            assert_eq!(prop.number, 18 + i as u32);
            assert!(prop.source_goals.len() >= 2);
        }
        assert_eq!(run.prompt_hash.len(), 64);
        assert!(matches!(
            synthesize_graphs(&graphs()[..3], &Catalog::bundled(), &gw, &PromptSet::builtin()),
            Err(SynthesisError::IncompleteDataset { found: 3 })
        ));
    }

    #[test]
    fn fenced_round_trip() {
        let d = doc(vec![raw("Goal 18: A", "Goal 1, Goal 2")]);
        assert_eq!(parse_proposals(&to_fenced(&d)).unwrap().len(), 1);
    }
}
