#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use goalforge_core::ingest::{CorpusWindow, FixtureSource, TED_CHANNEL_ID};
use goalforge_core::llm::{Gateway, MockProvider, MockRule, ProviderConfig, ProviderError};
use goalforge_core::pipeline::{run_pipeline, IngestConfig, PipelineConfig, RunReport, Stage};
use goalforge_core::store::Store;
use goalforge_core::Dataset;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn mock_gateway(seed: u64, rules: Vec<MockRule>) -> Gateway {
    let mut provider = MockProvider::new(seed);
    for rule in rules {
        provider = provider.with_rule(rule);
    }
    let config = ProviderConfig {
        seed: Some(seed),
        backoff_base_ms: 1,
        ..Default::default()
    };
    Gateway::new(Arc::new(provider), config)
}

/// One talk answered with prose, one blocked by the safety filter.
pub fn failing_rules() -> Vec<MockRule> {
    vec![
        MockRule::text("video_id: tk23040", "I would rather not answer in JSON."),
        MockRule::fail("video_id: tk23041", ProviderError::SafetyBlocked("flagged".into())),
    ]
}

pub fn config(dataset: &Dataset, out: Option<PathBuf>) -> PipelineConfig {
    let source = FixtureSource::open(fixture("corpus")).expect("corpus fixture");
    PipelineConfig {
        ingest: Some(IngestConfig {
            source: Arc::new(source),
            channel: TED_CHANNEL_ID.into(),
            window: CorpusWindow::for_dataset(dataset).expect("built-in window"),
            page_limit: 0,
            rate: None,
        }),
        out_dir: out,
        ..Default::default()
    }
}

/// Runs every stage over the demo corpus into a fresh store under `dir`.
pub fn full_run(dir: &Path, dataset: &Dataset, seed: u64, rules: Vec<MockRule>) -> (Store, RunReport) {
    let store = Store::open(dir.join("store.db")).expect("store");
    let report = run_pipeline(
        &store,
        dataset,
        &Stage::ALL,
        &mock_gateway(seed, rules),
        &config(dataset, Some(dir.join("site"))),
    )
    .expect("pipeline");
    (store, report)
}
