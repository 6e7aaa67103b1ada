//! Static site bundle for the graph viewer.
//!
//! Layout of an exported directory:
//!
//! ```text
//! manifest.json            checksums of every other file
//! graphs/goal-01.json ...  one document per goal, nodes carry degree and color_bin
//! metrics.json             per-goal structural metrics
//! new_goals.json           proposals numbered from 18
//! cooccurrence.json        17x17 tag matrix (when annotations exist)
//! ```
//!
//! Bundles contain no timestamps, so the same inputs give the same bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{color_bins, kg_metrics, node_degrees, AnalyticsError, CooccurrenceMatrix, DiagonalMode, KgMetrics};
use crate::kg::{KgLink, KnowledgeGraph};
use crate::store::{Store, StoreError};
use crate::synthesis::{NewGoalProposal, SubGoal};
use crate::{Catalog, Dataset, GOAL_COUNT};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// The published schema every bundle document validates against.
pub const BUNDLE_SCHEMA: &str = include_str!("../../../docs/bundle-schema.json");

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("dataset has {found} of 17 graphs")]
    IncompleteDataset { found: usize },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Verify { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub schema_version: u32,
    pub generator: Generator,
    pub dataset: Dataset,
    pub seed: Option<u64>,
    pub provider: Option<String>,
    pub model: Option<String>,
    pub palette_size: usize,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleNode {
    pub id: String,
    pub order: u32,
    pub details: String,
    pub degree: usize,
    pub color_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub kind: String,
    pub schema_version: u32,
    pub dataset: Dataset,
    pub goal: u8,
    pub label: String,
    pub palette_size: usize,
    pub nodes: Vec<BundleNode>,
    pub links: Vec<KgLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub kind: String,
    pub schema_version: u32,
    pub dataset: Dataset,
    pub palette_size: usize,
    pub rows: Vec<KgMetrics>,
}

/// Proposal in the column layout Goal, Sub-goal, Indicator, Source, Description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalEntry {
    pub number: u32,
    pub goal: String,
    pub title: String,
    pub sub_goals: Vec<SubGoal>,
    pub source: String,
    pub source_goals: Vec<u8>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewGoalsDocument {
    pub kind: String,
    pub schema_version: u32,
    pub dataset: Dataset,
    pub proposals: Vec<ProposalEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceDocument {
    pub kind: String,
    pub schema_version: u32,
    pub dataset: Dataset,
    pub mode: DiagonalMode,
    pub cells: Vec<Vec<u32>>,
}

/// Everything an export needs, already loaded.
#[derive(Debug, Clone)]
pub struct BundleInputs<'a> {
    pub dataset: Dataset,
    pub graphs: &'a [KnowledgeGraph],
    pub proposals: &'a [NewGoalProposal],
    pub matrix: Option<&'a CooccurrenceMatrix>,
    pub palette_size: usize,
    pub seed: Option<u64>,
    pub provider: Option<String>,
    pub model: Option<String>,
}

pub fn graph_document(graph: &KnowledgeGraph, catalog: &Catalog, palette: usize) -> GraphDocument {
    let degrees = node_degrees(graph);
    let bins = color_bins(&degrees, palette);
    let mut nodes: Vec<BundleNode> = graph
        .nodes
        .iter()
        .map(|n| BundleNode {
            id: n.id.clone(),
            order: n.order,
            details: n.details.clone(),
            degree: degrees[&n.id],
            color_bin: bins[&n.id],
        })
        .collect();
    nodes.sort_by_key(|n| n.order);
    GraphDocument {
        kind: "graph".into(),
        schema_version: BUNDLE_SCHEMA_VERSION,
        dataset: graph.dataset.clone(),
        goal: graph.goal,
        label: catalog.goal(graph.goal).map_or_else(|| format!("Goal {}", graph.goal), |g| g.label()),
        palette_size: palette,
        nodes,
        links: graph.links.clone(),
    }
}

fn proposal_entry(p: &NewGoalProposal) -> ProposalEntry {
    ProposalEntry {
        number: p.number,
        goal: p.label(),
        title: p.title.clone(),
        sub_goals: p.sub_goals.clone(),
        source: p.source.clone(),
        source_goals: p.source_goals.iter().copied().collect(),
        description: p.rationale.clone(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_bytes<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(doc).expect("bundle documents serialise");
    s.push('\n');
    s.into_bytes()
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8]) -> Result<FileEntry, ExportError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ExportError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(&path, bytes).map_err(|source| ExportError::Io { path: path.clone(), source })?;
    Ok(FileEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    })
}

/// Writes the bundle into `out_dir`, creating it if needed.
pub fn export_site(inputs: &BundleInputs<'_>, catalog: &Catalog, out_dir: &Path) -> Result<Manifest, ExportError> {
    let mut graphs: Vec<&KnowledgeGraph> = inputs.graphs.iter().collect();
    graphs.sort_by_key(|g| g.goal);
    graphs.dedup_by_key(|g| g.goal);
    if graphs.len() != GOAL_COUNT {
        return Err(ExportError::IncompleteDataset { found: graphs.len() });
    }
    let palette = inputs.palette_size;
    let mut files = Vec::new();
    let mut rows = Vec::with_capacity(GOAL_COUNT);
    for g in &graphs {
        let doc = graph_document(g, catalog, palette);
        files.push(write_file(out_dir, &format!("graphs/goal-{:02}.json", g.goal), &to_bytes(&doc))?);
        rows.push(kg_metrics(g, palette)?);
    }
    let metrics = MetricsDocument {
        kind: "metrics".into(),
        schema_version: BUNDLE_SCHEMA_VERSION,
        dataset: inputs.dataset.clone(),
        palette_size: palette,
        rows,
    };
    files.push(write_file(out_dir, "metrics.json", &to_bytes(&metrics))?);
    let new_goals = NewGoalsDocument {
        kind: "new_goals".into(),
        schema_version: BUNDLE_SCHEMA_VERSION,
        dataset: inputs.dataset.clone(),
        proposals: inputs.proposals.iter().map(proposal_entry).collect(),
    };
    files.push(write_file(out_dir, "new_goals.json", &to_bytes(&new_goals))?);
    if let Some(m) = inputs.matrix {
        let doc = CooccurrenceDocument {
            kind: "cooccurrence".into(),
            schema_version: BUNDLE_SCHEMA_VERSION,
            dataset: m.dataset.clone(),
            mode: m.mode,
            cells: m.cells.clone(),
        };
        files.push(write_file(out_dir, "cooccurrence.json", &to_bytes(&doc))?);
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        kind: "manifest".into(),
        schema_version: BUNDLE_SCHEMA_VERSION,
        generator: Generator {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        dataset: inputs.dataset.clone(),
        seed: inputs.seed,
        provider: inputs.provider.clone(),
        model: inputs.model.clone(),
        palette_size: palette,
        files,
    };
    write_file(out_dir, "manifest.json", &to_bytes(&manifest))?;
    Ok(manifest)
}

/// Exports a stored dataset. Seed, provider and model come from the graphs'
/// provenance when present.
pub fn export_from_store(
    store: &Store,
    dataset: &Dataset,
    catalog: &Catalog,
    out_dir: &Path,
    palette: usize,
) -> Result<Manifest, ExportError> {
    let snap = store.snapshot(dataset)?;
    let graphs: Vec<KnowledgeGraph> = snap.graphs()?.into_iter().map(|s| s.graph).collect();
    let proposals = snap.proposals()?;
    let tags: Vec<_> = snap.annotations()?.into_iter().map(|a| a.annotation.sdg_types).collect();
    let matrix = if tags.is_empty() {
        None
    } else {
        Some(CooccurrenceMatrix::from_tag_sets(dataset.clone(), &tags, DiagonalMode::AnyCardinality)?)
    };
    let run = graphs.iter().find_map(|g| g.provenance.as_ref());
    let inputs = BundleInputs {
        dataset: dataset.clone(),
        graphs: &graphs,
        proposals: &proposals,
        matrix: matrix.as_ref(),
        palette_size: palette,
        seed: run.and_then(|r| r.seed),
        provider: run.map(|r| r.provider.clone()),
        model: run.map(|r| r.model.clone()),
    };
    export_site(&inputs, catalog, out_dir)
}

/// Re-reads a bundle and checks every checksum in its manifest.
pub fn verify_bundle(dir: &Path) -> Result<Manifest, ExportError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| ExportError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ExportError::Verify {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    for f in &manifest.files {
        let path = dir.join(&f.path);
        let bytes = std::fs::read(&path).map_err(|source| ExportError::Io { path: path.clone(), source })?;
        if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(ExportError::Verify {
                path: f.path.clone(),
                message: "checksum mismatch".into(),
            });
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{load_graphs, load_tag_sets, DEFAULT_PALETTE};
    use crate::synthesis::load_proposals;

    fn fixture(rel: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
    }

    fn schema() -> jsonschema::Validator {
        let schema: serde_json::Value = serde_json::from_str(BUNDLE_SCHEMA).unwrap();
        jsonschema::validator_for(&schema).unwrap()
    }

    fn export(dir: &Path) -> Manifest {
        let graphs = load_graphs(&fixture("graphs/formal.json")).unwrap();
        let proposals = load_proposals(&fixture("new_goals/formal.md")).unwrap();
        let tags = load_tag_sets(&fixture("tags/formal.jsonl")).unwrap();
        let matrix = CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &tags, DiagonalMode::AnyCardinality).unwrap();
        let inputs = BundleInputs {
            dataset: Dataset::Formal,
            graphs: &graphs,
            proposals: &proposals,
            matrix: Some(&matrix),
            palette_size: DEFAULT_PALETTE,
            seed: Some(7),
            provider: Some("mock".into()),
            model: Some("m".into()),
        };
        export_site(&inputs, &Catalog::bundled(), dir).unwrap()
    }

    #[test]
    fn bundle_validates_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("new/site");
        let manifest = export(&out);
        assert_eq!(manifest.files.iter().filter(|f| f.path.starts_with("graphs/")).count(), 17);
        assert_eq!(verify_bundle(&out).unwrap(), manifest);
        let v = schema();
        for f in manifest.files.iter().map(|f| f.path.as_str()).chain(["manifest.json"]) {
            let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join(f)).unwrap()).unwrap();
            let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{f}: {errors:?}");
        }
    }

    #[test]
    fn re_export_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        assert_eq!(export(a.path()), export(b.path()));
        assert_eq!(
            std::fs::read(a.path().join("manifest.json")).unwrap(),
            std::fs::read(b.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn node_degrees_match_analytics() {
        let dir = tempfile::tempdir().unwrap();
        export(dir.path());
        let graphs = load_graphs(&fixture("graphs/formal.json")).unwrap();
        let metrics: MetricsDocument =
            serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
        for (g, row) in graphs.iter().zip(&metrics.rows) {
            let doc: GraphDocument = serde_json::from_slice(
                &std::fs::read(dir.path().join(format!("graphs/goal-{:02}.json", g.goal))).unwrap(),
            )
            .unwrap();
            let degrees = node_degrees(g);
            assert!(doc.nodes.iter().all(|n| n.degree == degrees[&n.id]));
            let colors: std::collections::BTreeSet<usize> = doc.nodes.iter().map(|n| n.color_bin).collect();
            assert_eq!(colors.len(), row.color_variety);
        }
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        export(dir.path());
        std::fs::write(dir.path().join("metrics.json"), "{}").unwrap();
        assert!(matches!(verify_bundle(dir.path()), Err(ExportError::Verify { .. })));
    }

    #[test]
    fn incomplete_dataset_is_refused() {
        let graphs = load_graphs(&fixture("graphs/formal.json")).unwrap();
        let inputs = BundleInputs {
            dataset: Dataset::Formal,
            graphs: &graphs[..10],
            proposals: &[],
            matrix: None,
            palette_size: DEFAULT_PALETTE,
            seed: None,
            provider: None,
            model: None,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_site(&inputs, &Catalog::bundled(), dir.path()),
            Err(ExportError::IncompleteDataset { found: 10 })
        ));
    }
}
