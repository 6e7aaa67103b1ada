//! Quantitative analyses over annotations and graphs.
//!
//! Everything here is a pure function over values read from the store or
//! from fixture files.

mod cooccurrence;
mod heatmap;
mod metrics;
pub mod stats;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cooccurrence::{
    attribute_network, load_tag_sets, zero_pair_report, AttributeNetwork, CooccurrenceMatrix, DiagonalMode,
    NetworkEdge, NetworkNode, ZeroPair,
};
pub use heatmap::{heatmap_csv, heatmap_png, write_heatmap, HEATMAP_CELL_PX, MAX_COLOR, MIN_COLOR};
pub use metrics::{color_bins, kg_metrics, node_degrees, DirectionTrend, KgMetrics, DEFAULT_PALETTE, NEAR_BALANCE};
pub use stats::{compare_datasets, ComparisonReport, LeveneCenter, Metric};

use crate::kg::{KgLink, KgNode, KnowledgeGraph};
use crate::Dataset;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("dataset has no tagged talks")]
    EmptyDataset,
    #[error("graph for goal {0} has no nodes")]
    EmptyGraph(u8),
    #[error("palette needs at least 2 colors, got {0}")]
    Palette(usize),
    #[error("dataset has {found} of 17 graphs")]
    IncompleteDataset { found: usize },
    #[error("{path}: {message}")]
    Fixture { path: String, message: String },
}

#[derive(Deserialize)]
struct GraphFile {
    dataset: Dataset,
    graphs: Vec<GraphEntry>,
}

#[derive(Serialize, Deserialize)]
struct GraphEntry {
    goal: u8,
    nodes: Vec<KgNode>,
    #[serde(default)]
    links: Vec<KgLink>,
}

/// Reads a `{dataset, graphs: [{goal, nodes, links}]}` file and checks
/// every graph.
pub fn load_graphs(path: &Path) -> Result<Vec<KnowledgeGraph>, AnalyticsError> {
    let fixture_err = |message: String| AnalyticsError::Fixture {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
    let file: GraphFile = serde_json::from_str(&text).map_err(|e| fixture_err(e.to_string()))?;
    let mut goals = BTreeSet::new();
    let mut out = Vec::with_capacity(file.graphs.len());
    for g in file.graphs {
        if !goals.insert(g.goal) {
            return Err(fixture_err(format!("goal {} appears twice", g.goal)));
        }
        let graph = KnowledgeGraph {
            goal: g.goal,
            dataset: file.dataset.clone(),
            nodes: g.nodes,
            links: g.links,
            provenance: None,
        };
        graph.check().map_err(|e| fixture_err(e.to_string()))?;
        out.push(graph);
    }
    out.sort_by_key(|g| g.goal);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture(rel: &str) -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
    }

    #[test]
    fn reference_graphs_load() {
        let pre = load_graphs(&fixture("graphs/preliminary.json")).unwrap();
        assert_eq!(pre.len(), 17);
        assert!(pre.iter().all(|g| g.dataset == Dataset::Preliminary));
        let formal = load_graphs(&fixture("graphs/formal.json")).unwrap();
        assert_eq!(formal.iter().map(|g| g.nodes.len()).sum::<usize>(), 343);
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(load_graphs(Path::new("/nonexistent.json")), Err(AnalyticsError::Fixture { .. })));
    }
}
