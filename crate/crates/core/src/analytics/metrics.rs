use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::kg::KnowledgeGraph;

pub const DEFAULT_PALETTE: usize = 8;

/// Largest |outward - inward| still flagged as near balance.
pub const NEAR_BALANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionTrend {
    Inward,
    Outward,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgMetrics {
    pub goal: u8,
    pub initial_node: String,
    /// Every node of maximum degree, by order.
    pub most_connected: Vec<String>,
    pub final_node: String,
    pub color_variety: usize,
    pub direction_trend: DirectionTrend,
    pub inward_count: usize,
    pub outward_count: usize,
    /// |outward - inward| is at most [`NEAR_BALANCE`].
    pub near_balance: bool,
    pub n_nodes: usize,
    pub n_links: usize,
}

/// Undirected degree per node id; a self-loop counts once.
pub fn node_degrees(graph: &KnowledgeGraph) -> BTreeMap<String, usize> {
    let mut deg: BTreeMap<String, usize> = graph.nodes.iter().map(|n| (n.id.clone(), 0)).collect();
    for l in &graph.links {
        *deg.entry(l.source.clone()).or_default() += 1;
        if l.target != l.source {
            *deg.entry(l.target.clone()).or_default() += 1;
        }
    }
    deg
}

/// Color bin per node: `floor((d - min) / max(1, max - min + 1) * palette)`.
pub fn color_bins(degrees: &BTreeMap<String, usize>, palette: usize) -> BTreeMap<String, usize> {
    let lo = degrees.values().copied().min().unwrap_or(0);
    let hi = degrees.values().copied().max().unwrap_or(0);
    let span = (hi - lo + 1).max(1);
    degrees
        .iter()
        .map(|(id, d)| (id.clone(), (d - lo) * palette / span))
        .collect()
}

pub fn kg_metrics(graph: &KnowledgeGraph, palette: usize) -> Result<KgMetrics, AnalyticsError> {
    if palette < 2 {
        return Err(AnalyticsError::Palette(palette));
    }
    let mut nodes: Vec<_> = graph.nodes.iter().collect();
    if nodes.is_empty() {
        return Err(AnalyticsError::EmptyGraph(graph.goal));
    }
    nodes.sort_by_key(|n| n.order);
    let order: BTreeMap<&str, u32> = nodes.iter().map(|n| (n.id.as_str(), n.order)).collect();
    let degrees = node_degrees(graph);
    let max_degree = degrees.values().copied().max().unwrap_or(0);
    let most_connected = nodes
        .iter()
        .filter(|n| degrees[&n.id] == max_degree)
        .map(|n| n.id.clone())
        .collect();
    let (mut inward, mut outward) = (0, 0);
    for l in &graph.links {
        let (s, t) = (order.get(l.source.as_str()), order.get(l.target.as_str()));
        match (s, t) {
            (Some(s), Some(t)) if s > t => inward += 1,
            (Some(s), Some(t)) if s < t => outward += 1,
            _ => {}
        }
    }
    let direction_trend = match outward.cmp(&inward) {
        std::cmp::Ordering::Greater => DirectionTrend::Outward,
        std::cmp::Ordering::Less => DirectionTrend::Inward,
        std::cmp::Ordering::Equal => DirectionTrend::Balanced,
    };
    let bins = color_bins(&degrees, palette);
    let color_variety = bins.values().collect::<std::collections::BTreeSet<_>>().len();
    Ok(KgMetrics {
        goal: graph.goal,
        initial_node: nodes[0].id.clone(),
        most_connected,
        final_node: nodes[nodes.len() - 1].id.clone(),
        color_variety,
        direction_trend,
        inward_count: inward,
        outward_count: outward,
        near_balance: outward.abs_diff(inward) <= NEAR_BALANCE,
        n_nodes: graph.nodes.len(),
        n_links: graph.links.len(),
    })
}
