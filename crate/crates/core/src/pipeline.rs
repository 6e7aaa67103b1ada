//! Stage orchestration over one dataset.
//!
//! Stages always run in dependency order, whatever order they are requested
//! in. Each checks that its inputs exist in the store before doing any work.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    attribute_network, compare_datasets, kg_metrics, write_heatmap, zero_pair_report, AnalyticsError,
    CooccurrenceMatrix, DiagonalMode, KgMetrics, LeveneCenter, Metric, DEFAULT_PALETTE,
};
use crate::annotate::{annotate_dataset, tag_statistics, AnnotateError};
use crate::export::{export_from_store, ExportError};
use crate::ingest::{ingest, summarize, CorpusWindow, IngestError, SkipReason, VideoSource};
use crate::kg::{extract_all, graph_totals, KgError, KnowledgeGraph, KG_GUIDE};
use crate::llm::{Gateway, PromptSet, RateLimiter};
use crate::retrieval::{build_index, index_paths, EmbeddingIndex, RetrievalError, DEFAULT_CAP};
use crate::roundtable::simulate_all;
use crate::store::{Store, StoreError};
use crate::synthesis::{synthesize, SynthesisError};
use crate::{Catalog, Dataset, GOAL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Annotate,
    Index,
    Simulate,
    Extract,
    Synthesize,
    Analyze,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Annotate,
        Stage::Index,
        Stage::Simulate,
        Stage::Extract,
        Stage::Synthesize,
        Stage::Analyze,
        Stage::Export,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Annotate => "annotate",
            Stage::Index => "index",
            Stage::Simulate => "simulate",
            Stage::Extract => "extract",
            Stage::Synthesize => "synthesize",
            Stage::Analyze => "analyze",
            Stage::Export => "export",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot run {stage}: {missing}")]
    StagePrerequisiteMissing { stage: Stage, missing: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where ingest reads videos from.
#[derive(Clone)]
pub struct IngestConfig {
    pub source: Arc<dyn VideoSource>,
    pub channel: String,
    pub window: CorpusWindow,
    /// Result pages to list; 0 means all.
    pub page_limit: usize,
    /// Transcript lookups per second.
    pub rate: Option<f64>,
}

impl std::fmt::Debug for IngestConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IngestConfig")
            .field("channel", &self.channel)
            .field("window", &self.window)
            .field("page_limit", &self.page_limit)
            .field("rate", &self.rate)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub catalog: Catalog,
    pub prompts: PromptSet,
    pub kg_guide: String,
    pub ingest: Option<IngestConfig>,
    /// Participants per roundtable.
    pub cap: usize,
    /// Restricts simulate and extract to these goals.
    pub goals: Option<Vec<u8>>,
    pub palette: usize,
    pub diagonal: DiagonalMode,
    /// Bundle directory for the export stage.
    pub out_dir: Option<PathBuf>,
    /// Heatmap and matrix CSV directory for the analyze stage.
    pub analysis_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            catalog: Catalog::bundled(),
            prompts: PromptSet::builtin(),
            kg_guide: KG_GUIDE.to_string(),
            ingest: None,
            cap: DEFAULT_CAP,
            goals: None,
            palette: DEFAULT_PALETTE,
            diagonal: DiagonalMode::AnyCardinality,
            out_dir: None,
            analysis_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Option<Stage>,
    /// Items produced, keyed by what they are ("talks", "graphs", ...).
    pub counts: BTreeMap<String, usize>,
    /// Items deliberately left out, with the reason.
    pub skips: BTreeMap<String, String>,
    /// Items that failed and should be retried.
    pub failures: BTreeMap<String, String>,
    pub duration_ms: u64,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        StageReport { stage: Some(stage), ..Default::default() }
    }

    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: Dataset,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn failure_count(&self) -> usize {
        self.stages.iter().map(|s| s.failures.len()).sum()
    }

    pub fn is_success(&self) -> bool {
        self.failure_count() == 0
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == Some(stage))
    }
}

/// Analysis record names written by the analyze stage.
pub mod analysis_names {
    pub const METRICS: &str = "metrics";
    pub const GRAPH_TOTALS: &str = "graph_totals";
    pub const COOCCURRENCE: &str = "cooccurrence";
    pub const TAG_STATS: &str = "tag_stats";
    pub const ZERO_PAIRS: &str = "zero_pairs";
    pub const NETWORK: &str = "attribute_network";
    pub const COMPARISON: &str = "comparison";
}

fn missing(stage: Stage, what: impl Into<String>) -> PipelineError {
    PipelineError::StagePrerequisiteMissing { stage, missing: what.into() }
}

/// Runs `stages` over `dataset` in dependency order. Item-level failures are
/// collected in the report; a stage-level error stops the run.
pub fn run_pipeline(
    store: &Store,
    dataset: &Dataset,
    stages: &[Stage],
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    store.ensure_dataset(dataset)?;
    let ordered: BTreeSet<Stage> = stages.iter().copied().collect();
    let mut report = RunReport { dataset: dataset.clone(), stages: Vec::new() };
    let mut index: Option<EmbeddingIndex> = None;
    for stage in ordered {
        let started = Instant::now();
        log::info!("{dataset}: {stage}");
        let mut r = StageReport::new(stage);
        match stage {
            Stage::Ingest => run_ingest(store, dataset, config, &mut r)?,
            Stage::Annotate => run_annotate(store, dataset, gateway, config, &mut r)?,
            Stage::Index => index = Some(run_index(store, dataset, gateway, config, &mut r)?),
            Stage::Simulate => run_simulate(store, dataset, index.take(), gateway, config, &mut r)?,
            Stage::Extract => run_extract(store, dataset, gateway, config, &mut r)?,
            Stage::Synthesize => run_synthesize(store, dataset, gateway, config, &mut r)?,
            Stage::Analyze => run_analyze(store, dataset, config, &mut r)?,
            Stage::Export => run_export(store, dataset, config, &mut r)?,
        }
        r.duration_ms = started.elapsed().as_millis() as u64;
        report.stages.push(r);
    }
    Ok(report)
}

fn run_ingest(store: &Store, dataset: &Dataset, config: &PipelineConfig, r: &mut StageReport) -> Result<(), PipelineError> {
    let cfg = config.ingest.as_ref().ok_or_else(|| missing(Stage::Ingest, "no video source configured"))?;
    let limiter = cfg.rate.map(RateLimiter::new);
    let records = ingest(cfg.source.as_ref(), &cfg.channel, &cfg.window, cfg.page_limit, limiter.as_ref())?;
    store.batch(|s| {
        for rec in &records {
            s.put_talk(dataset, rec)?;
        }
        Ok::<_, StoreError>(())
    })?;
    let summary = summarize(&records);
    r.count("collected", summary.collected);
    r.count("usable", summary.usable);
    for rec in records.iter().filter(|x| !x.usable) {
        if let Some(reason) = rec.skip_reason {
            r.skips.insert(rec.video_id.clone(), reason.as_str().to_string());
        }
    }
    Ok(())
}

fn run_annotate(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    config: &PipelineConfig,
    r: &mut StageReport,
) -> Result<(), PipelineError> {
    let counts = store.counts(dataset)?;
    if counts.usable_talks == 0 && counts.annotations == 0 {
        return Err(missing(Stage::Annotate, "no usable talks; run ingest first"));
    }
    let summary = annotate_dataset(store, dataset, gateway, &config.prompts)?;
    r.count("annotated", summary.annotated);
    r.count("already_done", summary.already_done);
    // Demoted talks are final skips; anything else that failed can be retried.
    let demoted: BTreeMap<String, String> = store
        .talks(dataset)?
        .into_iter()
        .filter_map(|t| match t.skip_reason {
            Some(reason @ (SkipReason::AnnotationFailed | SkipReason::SafetyBlocked)) => {
                Some((t.video_id, reason.as_str().to_string()))
            }
            _ => None,
        })
        .collect();
    for f in store.failures(dataset, crate::annotate::STAGE)? {
        if !demoted.contains_key(&f.item) {
            r.failures.insert(f.item, f.reason);
        }
    }
    r.skips.extend(demoted);
    let tags: Vec<_> = store.annotations(dataset)?.into_iter().map(|a| a.annotation.sdg_types).collect();
    if let Ok(stats) = tag_statistics(&tags) {
        r.count("tagged_talks", stats.talks);
        r.count("tags", stats.total_tags);
    }
    Ok(())
}

fn run_index(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    config: &PipelineConfig,
    r: &mut StageReport,
) -> Result<EmbeddingIndex, PipelineError> {
    let annotations: Vec<_> = store.annotations(dataset)?.into_iter().map(|a| a.annotation).collect();
    if annotations.is_empty() {
        return Err(missing(Stage::Index, "no annotations; run annotate first"));
    }
    let (index, skipped) = build_index(&annotations, &config.catalog, gateway)?;
    let (vectors, manifest) = index_paths(store.path(), dataset);
    index.save(&vectors, &manifest)?;
    r.count("entries", index.len());
    r.count("profiles", index.profiles.len());
    for s in skipped {
        r.failures.insert(s.video_id, s.error);
    }
    Ok(index)
}

fn run_simulate(
    store: &Store,
    dataset: &Dataset,
    index: Option<EmbeddingIndex>,
    gateway: &Gateway,
    config: &PipelineConfig,
    r: &mut StageReport,
) -> Result<(), PipelineError> {
    if store.counts(dataset)?.annotations == 0 {
        return Err(missing(Stage::Simulate, "no annotations; run annotate and index first"));
    }
    let index = match index {
        Some(i) => i,
        None => {
            let (vectors, manifest) = index_paths(store.path(), dataset);
            if !manifest.exists() {
                return Err(missing(Stage::Simulate, "no embedding index; run index first"));
            }
            EmbeddingIndex::load(&vectors, &manifest)?
        }
    };
    let summary = simulate_all(
        store,
        dataset,
        &index,
        &config.catalog,
        gateway,
        &config.prompts,
        config.cap,
        config.goals.as_deref(),
    )?;
    r.count("transcripts", summary.simulated.len());
    for (goal, reason) in summary.failed {
        r.failures.insert(format!("goal {goal}"), reason);
    }
    Ok(())
}

fn run_extract(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    config: &PipelineConfig,
    r: &mut StageReport,
) -> Result<(), PipelineError> {
    if store.counts(dataset)?.transcripts == 0 {
        return Err(missing(Stage::Extract, "no transcripts; run simulate first"));
    }
    let summary = extract_all(store, dataset, gateway, &config.prompts, &config.kg_guide, config.goals.as_deref())?;
    r.count("graphs", summary.extracted.len());
    r.count("repaired", summary.repaired.len());
    for (goal, reason) in summary.failed {
        r.failures.insert(format!("goal {goal}"), reason);
    }
    Ok(())
}

fn stored_graphs(store: &Store, dataset: &Dataset, stage: Stage) -> Result<Vec<KnowledgeGraph>, PipelineError> {
    let graphs: Vec<KnowledgeGraph> = store.graphs(dataset)?.into_iter().map(|s| s.graph).collect();
    if graphs.len() != GOAL_COUNT {
        return Err(missing(stage, format!("{} of 17 graphs; run extract first", graphs.len())));
    }
    Ok(graphs)
}

fn run_synthesize(
    store: &Store,
    dataset: &Dataset,
    gateway: &Gateway,
    config: &PipelineConfig,
    r: &mut StageReport,
) -> Result<(), PipelineError> {
    stored_graphs(store, dataset, Stage::Synthesize)?;
    match synthesize(store, dataset, &config.catalog, gateway, &config.prompts) {
        Ok((proposals, _)) => r.count("proposals", proposals.len()),
        Err(e @ (SynthesisError::SynthesisFailed(_) | SynthesisError::SafetyBlocked | SynthesisError::Provider(_))) => {
            r.failures.insert(dataset.label().to_string(), e.to_string());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn run_analyze(store: &Store, dataset: &Dataset, config: &PipelineConfig, r: &mut StageReport) -> Result<(), PipelineError> {
    use analysis_names::*;
    let graphs = stored_graphs(store, dataset, Stage::Analyze)?;
    let rows: Vec<KgMetrics> = graphs
        .iter()
        .map(|g| kg_metrics(g, config.palette))
        .collect::<Result<_, _>>()?;
    let totals = graph_totals(&graphs)?;
    store.put_analysis(dataset, METRICS, &rows)?;
    store.put_analysis(dataset, GRAPH_TOTALS, &totals)?;
    r.count("metrics_rows", rows.len());
    r.count("total_nodes", totals.total_nodes);
    r.count("total_links", totals.total_links);

    let tags: Vec<_> = store.annotations(dataset)?.into_iter().map(|a| a.annotation.sdg_types).collect();
    if tags.is_empty() {
        r.skips.insert(COOCCURRENCE.into(), "no annotations".into());
    } else {
        let matrix = CooccurrenceMatrix::from_tag_sets(dataset.clone(), &tags, config.diagonal)?;
        store.put_analysis(dataset, COOCCURRENCE, &matrix)?;
        store.put_analysis(dataset, TAG_STATS, &tag_statistics(&tags)?)?;
        store.put_analysis(dataset, ZERO_PAIRS, &zero_pair_report(&matrix))?;
        store.put_analysis(dataset, NETWORK, &attribute_network(&matrix, 1))?;
        if let Some(dir) = &config.analysis_dir {
            write_heatmap(&matrix, dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
        }
        r.count("tagged_talks", tags.len());
    }

    // Compare with the other built-in dataset when it is complete too.
    let other = match dataset {
        Dataset::Preliminary => Some(Dataset::Formal),
        Dataset::Formal => Some(Dataset::Preliminary),
        Dataset::Custom(_) => None,
    };
    if let Some(other) = other {
        let theirs: Vec<KnowledgeGraph> = store.graphs(&other)?.into_iter().map(|s| s.graph).collect();
        if theirs.len() == GOAL_COUNT {
            let (pre, formal) = if *dataset == Dataset::Preliminary { (&graphs, &theirs) } else { (&theirs, &graphs) };
            let reports = [Metric::Nodes, Metric::Links]
                .into_iter()
                .map(|m| compare_datasets(m, pre, formal, LeveneCenter::Mean))
                .collect::<Result<Vec<_>, _>>()?;
            store.put_analysis(dataset, COMPARISON, &reports)?;
            r.count("comparisons", reports.len());
        }
    }
    Ok(())
}

fn run_export(store: &Store, dataset: &Dataset, config: &PipelineConfig, r: &mut StageReport) -> Result<(), PipelineError> {
    let out = config.out_dir.as_ref().ok_or_else(|| missing(Stage::Export, "no output directory"))?;
    if store.analysis::<serde_json::Value>(dataset, analysis_names::METRICS)?.is_none() {
        return Err(missing(Stage::Export, "no metrics; run analyze first"));
    }
    let manifest = export_from_store(store, dataset, &config.catalog, out, config.palette)?;
    r.count("files", manifest.files.len() + 1);
    Ok(())
}
