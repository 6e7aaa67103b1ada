use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::{Dataset, GOAL_COUNT};

/// What the diagonal counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalMode {
    /// Every talk carrying the goal, whatever else it carries.
    #[default]
    AnyCardinality,
    /// Only talks carrying the goal and nothing else.
    SingleOnly,
}

/// Symmetric 17x17 tag co-occurrence counts, indexed by goal number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    pub dataset: Dataset,
    pub mode: DiagonalMode,
    /// Row i-1, column j-1 holds goals i and j.
    pub cells: Vec<Vec<u32>>,
}

impl CooccurrenceMatrix {
    pub fn from_tag_sets<'a, I>(dataset: Dataset, tag_sets: I, mode: DiagonalMode) -> Result<Self, AnalyticsError>
    where
        I: IntoIterator<Item = &'a BTreeSet<u8>>,
    {
        let mut cells = vec![vec![0u32; GOAL_COUNT]; GOAL_COUNT];
        let mut talks = 0;
        for set in tag_sets {
            talks += 1;
            let goals: Vec<usize> = set
                .iter()
                .filter(|g| (1..=GOAL_COUNT as u8).contains(g))
                .map(|g| *g as usize - 1)
                .collect();
            for (k, &i) in goals.iter().enumerate() {
                if mode == DiagonalMode::AnyCardinality || goals.len() == 1 {
                    cells[i][i] += 1;
                }
                for &j in &goals[k + 1..] {
                    cells[i][j] += 1;
                    cells[j][i] += 1;
                }
            }
        }
        if talks == 0 {
            return Err(AnalyticsError::EmptyDataset);
        }
        Ok(CooccurrenceMatrix { dataset, mode, cells })
    }

    /// Count for goals `i` and `j` (1-based).
    pub fn get(&self, i: u8, j: u8) -> u32 {
        self.cells[i as usize - 1][j as usize - 1]
    }

    pub fn max(&self) -> u32 {
        self.cells.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Goal pair holding the largest cell, first in row-major order.
    pub fn argmax(&self) -> (u8, u8) {
        let max = self.max();
        for (i, row) in self.cells.iter().enumerate() {
            if let Some(j) = row.iter().position(|&c| c == max) {
                return (i as u8 + 1, j as u8 + 1);
            }
        }
        (1, 1)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..GOAL_COUNT).all(|i| (0..GOAL_COUNT).all(|j| self.cells[i][j] == self.cells[j][i]))
    }
}

#[derive(Deserialize)]
struct TagLine {
    #[allow(dead_code)]
    video_id: String,
    sdg_types: BTreeSet<u8>,
}

/// Reads one `{"video_id", "sdg_types"}` object per line.
pub fn load_tag_sets(path: &Path) -> Result<Vec<BTreeSet<u8>>, AnalyticsError> {
    let err = |message: String| AnalyticsError::Fixture {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str::<TagLine>(l)
                .map(|t| t.sdg_types)
                .map_err(|e| err(format!("line {}: {e}", n + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub goal: u8,
    pub talks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub a: u8,
    pub b: u8,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeNetwork {
    pub min_weight: u32,
    pub nodes: Vec<NetworkNode>,
    /// Edges with `a < b`.
    pub edges: Vec<NetworkEdge>,
}

impl AttributeNetwork {
    pub fn edge(&self, a: u8, b: u8) -> Option<&NetworkEdge> {
        let (a, b) = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }
}

/// Goals with at least one talk, joined where they co-occur at least
/// `min_weight` times.
pub fn attribute_network(matrix: &CooccurrenceMatrix, min_weight: u32) -> AttributeNetwork {
    let n = GOAL_COUNT as u8;
    let nodes = (1..=n)
        .filter(|&g| matrix.get(g, g) > 0)
        .map(|g| NetworkNode { goal: g, talks: matrix.get(g, g) })
        .collect();
    let mut edges = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            let weight = matrix.get(a, b);
            if weight > 0 && weight >= min_weight {
                edges.push(NetworkEdge { a, b, weight });
            }
        }
    }
    AttributeNetwork { min_weight, nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroPair {
    pub a: u8,
    pub b: u8,
    pub talks_a: u32,
    pub talks_b: u32,
}

/// Goal pairs that never share a talk, `a < b`, in order.
pub fn zero_pair_report(matrix: &CooccurrenceMatrix) -> Vec<ZeroPair> {
    let n = GOAL_COUNT as u8;
    let mut out = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            if matrix.get(a, b) == 0 {
                out.push(ZeroPair { a, b, talks_a: matrix.get(a, a), talks_b: matrix.get(b, b) });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::fixture;
    use proptest::prelude::*;

    fn matrix(sets: &[&[u8]]) -> CooccurrenceMatrix {
        let sets: Vec<BTreeSet<u8>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
        CooccurrenceMatrix::from_tag_sets(Dataset::Preliminary, &sets, DiagonalMode::AnyCardinality).unwrap()
    }

    /// Brute force over every pair of goals and every talk.
    fn oracle(sets: &[BTreeSet<u8>], i: u8, j: u8) -> u32 {
        sets.iter().filter(|s| s.contains(&i) && s.contains(&j)).count() as u32
    }

    #[test]
    fn two_talk_example() {
        let m = matrix(&[&[1, 2], &[2]]);
        assert_eq!(m.get(1, 2), 1);
        assert_eq!(m.get(2, 2), 2);
        assert_eq!(m.get(1, 1), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        let none: Vec<BTreeSet<u8>> = vec![];
        assert_eq!(
            CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &none, DiagonalMode::AnyCardinality).unwrap_err(),
            AnalyticsError::EmptyDataset
        );
    }

    #[test]
    fn single_only_counts_lone_tags() {
        let sets: Vec<BTreeSet<u8>> = vec![[3].into(), [3, 10].into(), [10].into()];
        let m = CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &sets, DiagonalMode::SingleOnly).unwrap();
        assert_eq!((m.get(3, 3), m.get(10, 10), m.get(3, 10)), (1, 1, 1));
    }

    #[test]
    fn formal_fixture_matches_reported_counts() {
        let sets = load_tag_sets(&fixture("tags/formal.jsonl")).unwrap();
        assert_eq!(sets.len(), 1127);
        let m = CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &sets, DiagonalMode::AnyCardinality).unwrap();
        assert_eq!(m.get(10, 10), 521);
        assert_eq!(m.get(10, 16), 298);
        assert_eq!(m.get(6, 6), 12);
        assert_eq!(m.get(5, 7), 0);
        assert_eq!(m.argmax(), (10, 10));
        let zeros = zero_pair_report(&m);
        for (a, b) in [(4, 14), (5, 7), (5, 14), (6, 8)] {
            assert!(zeros.iter().any(|z| (z.a, z.b) == (a, b)), "missing ({a},{b})");
        }
        let z57 = zeros.iter().find(|z| (z.a, z.b) == (5, 7)).unwrap();
        assert_eq!((z57.talks_a, z57.talks_b), (147, 107));
        let net = attribute_network(&m, 1);
        assert_eq!(net.edge(16, 10).unwrap().weight, 298);
        assert!(net.edge(5, 7).is_none());
    }

    #[test]
    fn preliminary_fixture_matches_reported_counts() {
        let sets = load_tag_sets(&fixture("tags/preliminary.jsonl")).unwrap();
        let m = CooccurrenceMatrix::from_tag_sets(Dataset::Preliminary, &sets, DiagonalMode::AnyCardinality).unwrap();
        assert_eq!(m.get(10, 10), 115);
        assert_eq!(m.get(10, 16), 71);
    }

    #[test]
    fn unreachable_threshold_isolates_nodes() {
        let m = matrix(&[&[1, 2], &[3]]);
        let net = attribute_network(&m, u32::MAX);
        assert!(net.edges.is_empty());
        assert_eq!(net.nodes.len(), 3);
    }

    #[test]
    fn full_coverage_has_no_zero_pairs() {
        let all: Vec<u8> = (1..=17).collect();
        assert!(zero_pair_report(&matrix(&[&all])).is_empty());
    }

    proptest! {
        #[test]
        fn matrix_invariants(sets in prop::collection::vec(prop::collection::btree_set(1u8..=17, 1..6), 1..60)) {
            let m = CooccurrenceMatrix::from_tag_sets(Dataset::Formal, &sets, DiagonalMode::AnyCardinality).unwrap();
            prop_assert!(m.is_symmetric());
            for i in 1..=17u8 {
                for j in 1..=17u8 {
                    prop_assert_eq!(m.get(i, j), oracle(&sets, i, j));
                    prop_assert!(m.get(i, i) >= m.get(i, j));
                }
            }
        }
    }
}
