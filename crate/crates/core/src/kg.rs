//! Knowledge graphs extracted from roundtable transcripts.
//!
//! Raw documents from the model are repaired in a fixed order: trim ids,
//! merge duplicate ids, drop links whose endpoints are missing, renumber
//! orders to 1..N. Every change is listed in a [`RepairReport`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{
    corrective_prompt, parse_as, Gateway, GatewayError, KgDoc, PromptSet, RawLink, RawNode, RunMetadata,
    StructuredError,
};
use crate::roundtable::RoundtableTranscript;
use crate::store::{Store, StoreError};
use crate::Dataset;

pub const STAGE: &str = "extract";

/// Ontology guide passed to the extraction prompt.
pub const KG_GUIDE: &str = include_str!("../data/kg_guide.md");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgNode {
    pub id: String,
    pub order: u32,
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgLink {
    pub source: String,
    pub target: String,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub goal: u8,
    pub dataset: Dataset,
    pub nodes: Vec<KgNode>,
    pub links: Vec<KgLink>,
    pub provenance: Option<RunMetadata>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    Reprompted { reason: String },
    DroppedEmptyNode { position: usize },
    MergedDuplicateNode { id: String, copies: usize },
    DroppedDanglingLink { source: String, target: String, relation: String },
    RenumberedOrder { changed: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub actions: Vec<RepairAction>,
}

impl RepairReport {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&RepairAction) -> bool) -> usize {
        self.actions.iter().filter(|a| pred(a)).count()
    }

    /// Duplicates or dangling links: the problems worth one re-prompt.
    fn has_integrity_problem(&self) -> bool {
        self.actions.iter().any(|a| {
            matches!(
                a,
                RepairAction::MergedDuplicateNode { .. } | RepairAction::DroppedDanglingLink { .. }
            )
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KgError {
    #[error("no nodes survived validation for goal {0}")]
    EmptyGraph(u8),
    #[error("graph for goal {goal} is invalid: {reason}")]
    Invalid { goal: u8, reason: String },
    #[error("transcript for goal {0} is empty")]
    EmptyTranscript(u8),
    #[error("extraction failed for goal {goal}: {reason}")]
    ExtractionFailed { goal: u8, reason: StructuredError },
    #[error("extraction of goal {0} was blocked by the provider safety filter")]
    SafetyBlocked(u8),
    #[error("provider error while extracting goal {goal}: {source}")]
    Provider {
        goal: u8,
        #[source]
        source: GatewayError,
    },
    #[error("dataset has {found} of 17 graphs")]
    IncompleteDataset { found: usize },
}

impl KnowledgeGraph {
    /// Checks every graph invariant: at least one node, unique non-empty
    /// ids, orders forming 1..N, resolvable link endpoints.
    pub fn check(&self) -> Result<(), KgError> {
        let invalid = |reason: String| KgError::Invalid { goal: self.goal, reason };
        if self.nodes.is_empty() {
            return Err(KgError::EmptyGraph(self.goal));
        }
        let mut ids = BTreeSet::new();
        let mut orders = BTreeSet::new();
        for n in &self.nodes {
            if n.id.trim().is_empty() || n.id.trim() != n.id {
                return Err(invalid(format!("node id {:?} is blank or untrimmed", n.id)));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(invalid(format!("duplicate node id {:?}", n.id)));
            }
            orders.insert(n.order);
        }
        let expected: BTreeSet<u32> = (1..=self.nodes.len() as u32).collect();
        if orders != expected {
            return Err(invalid("node orders are not 1..N".into()));
        }
        for l in &self.links {
            if !ids.contains(l.source.as_str()) || !ids.contains(l.target.as_str()) {
                return Err(invalid(format!("link {} -> {} is dangling", l.source, l.target)));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&KgNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Back to the raw document shape, as a fixed point of repair.
    pub fn to_doc(&self) -> KgDoc {
        KgDoc {
            nodes: self
                .nodes
                .iter()
                .map(|n| RawNode {
                    id: n.id.clone(),
                    order: i64::from(n.order),
                    details: n.details.clone(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| RawLink {
                    source: l.source.clone(),
                    target: l.target.clone(),
                    relation: l.relation.clone(),
                })
                .collect(),
        }
    }
}

/// Repairs a raw graph document. Applying it to its own output yields an
/// empty report.
pub fn validate_and_repair(
    goal: u8,
    dataset: &Dataset,
    doc: KgDoc,
) -> Result<(KnowledgeGraph, RepairReport), KgError> {
    let mut report = RepairReport::default();

    // Merge by trimmed id, keeping the first position and the earliest order.
    struct Merged {
        id: String,
        order: i64,
        position: usize,
        details: Vec<String>,
        copies: usize,
    }
    let mut merged: Vec<Merged> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (position, raw) in doc.nodes.into_iter().enumerate() {
        let id = raw.id.trim().to_string();
        if id.is_empty() {
            report.actions.push(RepairAction::DroppedEmptyNode { position });
            continue;
        }
        let details = raw.details.trim().to_string();
        match by_id.get(&id) {
            Some(&i) => {
                let m = &mut merged[i];
                m.order = m.order.min(raw.order);
                m.copies += 1;
                if !details.is_empty() && !m.details.contains(&details) {
                    m.details.push(details);
                }
            }
            None => {
                by_id.insert(id.clone(), merged.len());
                merged.push(Merged {
                    id,
                    order: raw.order,
                    position,
                    details: if details.is_empty() { vec![] } else { vec![details] },
                    copies: 1,
                });
            }
        }
    }
    if merged.is_empty() {
        return Err(KgError::EmptyGraph(goal));
    }
    for m in merged.iter().filter(|m| m.copies > 1) {
        report.actions.push(RepairAction::MergedDuplicateNode {
            id: m.id.clone(),
            copies: m.copies,
        });
    }

    let mut links = Vec::with_capacity(doc.links.len());
    for raw in doc.links {
        let (source, target) = (raw.source.trim().to_string(), raw.target.trim().to_string());
        let relation = raw.relation.trim().to_string();
        if by_id.contains_key(&source) && by_id.contains_key(&target) {
            links.push(KgLink { source, target, relation });
        } else {
            report.actions.push(RepairAction::DroppedDanglingLink { source, target, relation });
        }
    }

    merged.sort_by_key(|m| (m.order, m.position));
    let changed = merged
        .iter()
        .enumerate()
        .filter(|(i, m)| m.order != *i as i64 + 1)
        .count();
    if changed > 0 {
        report.actions.push(RepairAction::RenumberedOrder { changed });
    }
    let nodes = merged
        .into_iter()
        .enumerate()
        .map(|(i, m)| KgNode {
            id: m.id,
            order: i as u32 + 1,
            details: m.details.join(" "),
        })
        .collect();
    let graph = KnowledgeGraph {
        goal,
        dataset: dataset.clone(),
        nodes,
        links,
        provenance: None,
    };
    debug_assert!(graph.check().is_ok());
    Ok((graph, report))
}

pub fn render_prompt(transcript: &RoundtableTranscript, prompts: &PromptSet, guide: &str) -> String {
    prompts
        .kg_extract
        .render_pairs(&[("kg_guide", guide.trim_end()), ("conversation_script", &transcript.text)])
        .expect("kg_extract template slots are fixed")
}

fn generate(gateway: &Gateway, goal: u8, prompt: &str) -> Result<(Result<KgDoc, StructuredError>, u32), KgError> {
    let completion = gateway.generate(prompt).map_err(|e| match e {
        GatewayError::SafetyBlocked(_) => KgError::SafetyBlocked(goal),
        source => KgError::Provider { goal, source },
    })?;
    Ok((parse_as::<KgDoc>(&completion.text), completion.retries))
}

/// Extracts, validates and repairs the graph of one transcript. A parse
/// failure, duplicate id or dangling link earns one corrective re-prompt;
/// whatever problems remain after it are repaired locally.
pub fn extract_graph(
    transcript: &RoundtableTranscript,
    gateway: &Gateway,
    prompts: &PromptSet,
    guide: &str,
) -> Result<(KnowledgeGraph, RepairReport), KgError> {
    let goal = transcript.goal;
    if transcript.text.trim().is_empty() {
        return Err(KgError::EmptyTranscript(goal));
    }
    let prompt = render_prompt(transcript, prompts, guide);
    let (first, retries) = generate(gateway, goal, &prompt)?;
    let first_repaired = first
        .clone()
        .map(|doc| validate_and_repair(goal, &transcript.dataset, doc));
    let reason = match &first_repaired {
        Ok(Ok((_, report))) if !report.has_integrity_problem() => None,
        Ok(Ok((_, report))) => Some(format!(
            "{} duplicate node ids and {} links whose source or target is not among the nodes",
            report.count(|a| matches!(a, RepairAction::MergedDuplicateNode { .. })),
            report.count(|a| matches!(a, RepairAction::DroppedDanglingLink { .. })),
        )),
        Ok(Err(e)) => Some(e.to_string()),
        Err(e) => Some(e.to_string()),
    };
    let Some(reason) = reason else {
        let (mut graph, report) = first_repaired.expect("checked").expect("checked");
        graph.provenance = Some(gateway.run_metadata(&prompt, retries));
        return Ok((graph, report));
    };

    log::info!("re-prompting extraction of goal {goal}: {reason}");
    let retry_prompt = corrective_prompt(&prompt, &reason);
    let (second, retries) = generate(gateway, goal, &retry_prompt)?;
    let (used_prompt, result) = match second {
        Ok(doc) => (&retry_prompt, validate_and_repair(goal, &transcript.dataset, doc)),
        // Fall back to repairing the first answer when it at least parsed.
        Err(e) => match first_repaired {
            Ok(r @ Ok(_)) => (&prompt, r),
            _ => return Err(KgError::ExtractionFailed { goal, reason: e }),
        },
    };
    let (mut graph, mut report) = result?;
    report.actions.insert(0, RepairAction::Reprompted { reason });
    graph.provenance = Some(gateway.run_metadata(used_prompt, retries));
    Ok((graph, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub extracted: BTreeSet<u8>,
    pub repaired: BTreeSet<u8>,
    pub failed: BTreeMap<u8, String>,
}

/// Extracts graphs for every stored transcript (or the given goals).
pub fn extract_all(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    prompts: &PromptSet,
    guide: &str,
    goals: Option<&[u8]>,
) -> Result<ExtractSummary, StoreError> {
    let transcripts: Vec<RoundtableTranscript> = store
        .transcripts(dataset)?
        .into_iter()
        .filter(|t| goals.is_none_or(|g| g.contains(&t.goal)))
        .collect();
    let results: Vec<_> = transcripts
        .par_iter()
        .map(|t| (t.goal, extract_graph(t, gateway, prompts, guide)))
        .collect();
    let mut summary = ExtractSummary::default();
    store.batch(|s| {
        for (goal, result) in results {
            let item = goal.to_string();
            match result {
                Ok((graph, report)) => {
                    s.put_graph(&graph, &report)?;
                    s.clear_failure(dataset, STAGE, &item)?;
                    if !report.is_empty() {
                        summary.repaired.insert(goal);
                    }
                    summary.extracted.insert(goal);
                }
                Err(e) => {
                    log::warn!("{e}");
                    s.record_failure(dataset, STAGE, &item, &e.to_string())?;
                    summary.failed.insert(goal, e.to_string());
                }
            }
        }
        Ok::<_, StoreError>(())
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphTotals {
    pub total_nodes: usize,
    pub total_links: usize,
    pub mean_nodes: f64,
    pub mean_links: f64,
}

/// Sums and means over one graph per goal.
pub fn graph_totals(graphs: &[KnowledgeGraph]) -> Result<GraphTotals, KgError> {
    let goals: BTreeSet<u8> = graphs.iter().map(|g| g.goal).collect();
    if graphs.len() != crate::GOAL_COUNT || goals.len() != crate::GOAL_COUNT {
        return Err(KgError::IncompleteDataset { found: goals.len() });
    }
    let total_nodes: usize = graphs.iter().map(|g| g.nodes.len()).sum();
    let total_links: usize = graphs.iter().map(|g| g.links.len()).sum();
    let n = graphs.len() as f64;
    Ok(GraphTotals {
        total_nodes,
        total_links,
        mean_nodes: total_nodes as f64 / n,
        mean_links: total_links as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{to_fenced, MockProvider, MockRule, ProviderConfig};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn node(id: &str, order: i64, details: &str) -> RawNode {
        RawNode { id: id.into(), order, details: details.into() }
    }

    fn link(s: &str, t: &str) -> RawLink {
        RawLink { source: s.into(), target: t.into(), relation: "enables".into() }
    }

    fn repair(doc: KgDoc) -> Result<(KnowledgeGraph, RepairReport), KgError> {
        validate_and_repair(1, &Dataset::Preliminary, doc)
    }

    #[test]
    fn clean_document_is_a_fixed_point() {
        let doc = KgDoc {
            nodes: vec![node("A", 1, "a"), node("B", 2, "b"), node("C", 3, "c")],
            links: vec![link("A", "B"), link("B", "C")],
        };
        let (g, report) = repair(doc.clone()).unwrap();
        assert!(report.is_empty());
        assert_eq!(g.to_doc(), doc);
    }

    #[test]
    fn colliding_orders_are_renumbered_in_sequence() {
        let doc = KgDoc {
            nodes: vec![node("A", 1, ""), node("B", 2, ""), node("C", 2, ""), node("D", 5, "")],
            links: vec![],
        };
        let (g, report) = repair(doc).unwrap();
        let got: Vec<(&str, u32)> = g.nodes.iter().map(|n| (n.id.as_str(), n.order)).collect();
        assert_eq!(got, [("A", 1), ("B", 2), ("C", 3), ("D", 4)]);
        assert_eq!(report.actions, [RepairAction::RenumberedOrder { changed: 2 }]);
    }

    #[test]
    fn duplicates_merge_keeping_earliest_order() {
        let doc = KgDoc {
            nodes: vec![node("A", 1, "first"), node("B", 2, "b"), node(" A ", 3, "second")],
            links: vec![link("B", "A")],
        };
        let (g, report) = repair(doc).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0], KgNode { id: "A".into(), order: 1, details: "first second".into() });
        assert_eq!(g.links.len(), 1);
        assert_eq!(report.actions, [RepairAction::MergedDuplicateNode { id: "A".into(), copies: 2 }]);
    }

    #[test]
    fn dangling_links_are_dropped_with_audit() {
        let doc = KgDoc {
            nodes: vec![node("A", 1, "")],
            links: vec![link("A", "Ghost"), link("Phantom", "A")],
        };
        let (g, report) = repair(doc).unwrap();
        assert!(g.links.is_empty());
        assert_eq!(report.count(|a| matches!(a, RepairAction::DroppedDanglingLink { .. })), 2);
    }

    #[test]
    fn blank_graph_is_rejected() {
        let doc = KgDoc { nodes: vec![node("  ", 1, "")], links: vec![] };
        assert_eq!(repair(doc).unwrap_err(), KgError::EmptyGraph(1));
    }

    fn transcript(text: &str) -> RoundtableTranscript {
        let gw = Gateway::new(Arc::new(MockProvider::new(0)), ProviderConfig::default());
        RoundtableTranscript {
            goal: 6,
            dataset: Dataset::Preliminary,
            participant_ids: vec!["a".into()],
            text: text.into(),
            word_count: 0,
            run: gw.run_metadata("x", 0),
        }
    }

    fn gw(provider: MockProvider) -> Gateway {
        Gateway::new(Arc::new(provider), ProviderConfig::default())
    }

    #[test]
    fn mock_extraction_has_no_dangling_links() {
        let t = transcript(
            "Host: We discuss **Clean Water**. **Clean Water** enables **Public Health**.\n\nP1: **Sanitation** supports **Public Health**.",
        );
        for seed in 0..20 {
            let (g, _) = extract_graph(&t, &gw(MockProvider::new(seed)), &PromptSet::builtin(), KG_GUIDE).unwrap();
            g.check().unwrap();
            assert_eq!(g.nodes[0].id, "Clean Water");
            assert!(g.provenance.is_some());
        }
    }

    #[test]
    fn persistent_dangling_link_is_reprompted_then_dropped() {
        let bad = to_fenced(&KgDoc {
            nodes: vec![node("A", 1, "")],
            links: vec![link("A", "Ghost")],
        });
        let provider = MockProvider::new(0).with_rule(MockRule::text("conversation_script:", bad));
        let (g, report) = extract_graph(&transcript("**A** text"), &gw(provider), &PromptSet::builtin(), KG_GUIDE).unwrap();
        assert!(g.links.is_empty());
        assert!(matches!(report.actions[0], RepairAction::Reprompted { .. }));
        assert_eq!(report.count(|a| matches!(a, RepairAction::DroppedDanglingLink { .. })), 1);
    }

    #[test]
    fn unparseable_twice_fails() {
        let provider = MockProvider::new(0).with_rule(MockRule::text("conversation_script:", "no graph here"));
        let err = extract_graph(&transcript("**A**"), &gw(provider), &PromptSet::builtin(), KG_GUIDE).unwrap_err();
        assert!(matches!(err, KgError::ExtractionFailed { goal: 6, .. }));
    }

    #[test]
    fn totals_over_single_node_graphs() {
        let graphs: Vec<KnowledgeGraph> = crate::goal_numbers()
            .map(|g| KnowledgeGraph {
                goal: g,
                dataset: Dataset::Formal,
                nodes: vec![KgNode { id: "x".into(), order: 1, details: String::new() }],
                links: vec![],
                provenance: None,
            })
            .collect();
        let t = graph_totals(&graphs).unwrap();
        assert_eq!((t.total_nodes, t.total_links, t.mean_nodes, t.mean_links), (17, 0, 1.0, 0.0));
        assert_eq!(graph_totals(&graphs[..16]).unwrap_err(), KgError::IncompleteDataset { found: 16 });
    }

    fn corrupted_doc() -> impl Strategy<Value = KgDoc> {
        let ids = prop::sample::select(vec!["A", "B", "C", " A", "D ", "", "E", "Ghost"]);
        let nodes = prop::collection::vec((ids.clone(), -3i64..10, "[a-z]{0,4}"), 0..12)
            .prop_map(|v| v.into_iter().map(|(id, o, d)| node(id, o, &d)).collect::<Vec<_>>());
        let links = prop::collection::vec((ids.clone(), ids), 0..12)
            .prop_map(|v| v.into_iter().map(|(s, t)| link(s, t)).collect::<Vec<_>>());
        (nodes, links).prop_map(|(nodes, links)| KgDoc { nodes, links })
    }

    proptest! {
        #[test]
        fn repair_yields_valid_graphs(doc in corrupted_doc()) {
            if let Ok((g, _)) = repair(doc) {
                prop_assert!(g.check().is_ok());
                let ids: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
                for l in &g.links {
                    prop_assert!(ids.contains(l.source.as_str()) && ids.contains(l.target.as_str()));
                }
            }
        }

        #[test]
        fn repair_is_idempotent(doc in corrupted_doc()) {
            if let Ok((g, _)) = repair(doc) {
                let (again, report) = repair(g.to_doc()).unwrap();
                prop_assert!(report.is_empty());
                prop_assert_eq!(again, g);
            }
        }
    }
}
