//! Turn a corpus of talk transcripts into per-goal roundtable knowledge graphs.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! 1. [`ingest`] collects talk metadata and transcripts (live API or fixtures).
//! 2. [`annotate`] summarises each talk and tags it with SDG goals.
//! 3. [`retrieval`] embeds annotations and picks roundtable participants per goal.
//! 4. [`roundtable`] generates one simulated discussion per goal.
//! 5. [`kg`] extracts a knowledge graph from each discussion and repairs it.
//! 6. [`synthesis`] overlays the 17 graphs and proposes new goals numbered from 18.
//! 7. [`analytics`] computes co-occurrence, graph metrics and dataset comparisons.
//! 8. [`export`] writes the static bundle consumed by the graph viewer.
//!
//! All text generation goes through [`llm::Gateway`], which has a seeded
//! mock provider so that every stage can run offline and deterministically.
//! Artifacts persist in a single SQLite file managed by [`store`].

#![forbid(unsafe_code)]

pub mod analytics;
pub mod annotate;
pub mod catalog;
pub mod dataset;
pub mod export;
pub mod ingest;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod roundtable;
pub mod store;
pub mod synthesis;

pub use catalog::{Catalog, SdgGoal, SdgIndicator, SdgTarget};
pub use dataset::Dataset;

/// Number of goals in the official catalog.
pub const GOAL_COUNT: usize = 17;

/// Iterator over the official goal numbers, 1 through 17.
pub fn goal_numbers() -> impl Iterator<Item = u8> {
    1..=GOAL_COUNT as u8
}
