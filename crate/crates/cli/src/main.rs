//! `goalforge`: run the pipeline stage by stage or end to end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use goalforge_core::analytics::{
    compare_datasets, load_graphs, load_tag_sets, zero_pair_report, CooccurrenceMatrix, DiagonalMode, LeveneCenter,
    Metric, DEFAULT_PALETTE,
};
use goalforge_core::annotate::tag_statistics;
use goalforge_core::ingest::{CorpusWindow, FixtureSource, VideoSource, YouTubeSource, TED_CHANNEL_ID};
use goalforge_core::kg::{graph_totals, KG_GUIDE};
use goalforge_core::llm::{Gateway, GeminiProvider, MockProvider, PromptSet, Provider, ProviderConfig};
use goalforge_core::pipeline::{analysis_names, run_pipeline, IngestConfig, PipelineConfig, RunReport, Stage};
use goalforge_core::retrieval::{index_paths, select_participants, EmbeddingIndex, DEFAULT_CAP};
use goalforge_core::store::Store;
use goalforge_core::Dataset;

#[derive(Parser)]
#[command(name = "goalforge", version, about = "Roundtable knowledge graphs from talk transcripts")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// SQLite store file.
    #[arg(long, global = true, default_value = "goalforge.db", env = "GOALFORGE_STORE")]
    store: PathBuf,
    /// Dataset label: preliminary, formal or a custom lowercase label.
    #[arg(long, global = true, default_value = "formal")]
    dataset: Dataset,
    #[arg(long, global = true, value_enum, default_value_t = ProviderKind::Mock)]
    provider: ProviderKind,
    /// Seed for the mock provider.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Directory of recorded videos to ingest instead of the live API.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Directory with prompt template overrides.
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
    /// Requests per second to the model provider and the video API.
    #[arg(long, global = true)]
    rate: Option<f64>,
    /// Per-request timeout in seconds for live providers.
    #[arg(long, global = true, default_value_t = 120)]
    timeout: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Mock,
    Live,
}

#[derive(Args, Default)]
struct IngestArgs {
    /// Collection window START..END (YYYY-MM-DD); defaults to the dataset's window.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value = TED_CHANNEL_ID)]
    channel: String,
    /// Listing pages of 50 videos; 0 lists everything.
    #[arg(long, default_value_t = 0)]
    pages: usize,
    /// Record live results into this directory in the fixture layout.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args, Default)]
struct GoalArgs {
    /// Participants per roundtable.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Restrict to these goals (repeatable).
    #[arg(long = "goal", value_parser = clap::value_parser!(u8).range(1..=17))]
    goals: Vec<u8>,
}

#[derive(Args, Default)]
struct AnalyzeArgs {
    /// Write heatmap.png and matrix.csv here.
    #[arg(long = "heatmap-dir")]
    heatmap_dir: Option<PathBuf>,
    /// Diagonal counts only talks tagged with a single goal.
    #[arg(long)]
    single_only: bool,
    #[arg(long, default_value_t = DEFAULT_PALETTE)]
    palette: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Collect talk metadata and transcripts.
    Ingest(IngestArgs),
    /// Summarise and tag every usable talk.
    Annotate,
    /// Embed annotations and goal profiles.
    Index,
    /// Generate one roundtable transcript per goal.
    Simulate(GoalArgs),
    /// Extract and repair a knowledge graph per transcript.
    Extract(GoalArgs),
    /// Propose new goals from the 17 graphs.
    Synthesize,
    /// Compute metrics, co-occurrence and dataset comparisons.
    Analyze(AnalyzeArgs),
    /// Write the static viewer bundle.
    ExportSite {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PALETTE)]
        palette: usize,
    },
    /// Print statistics from the store, or from tag and graph files.
    Stats {
        /// Tag file, one {"video_id", "sdg_types"} per line.
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Two graph files to compare: first, second.
        #[arg(long, num_args = 2)]
        graphs: Vec<PathBuf>,
        #[arg(long)]
        single_only: bool,
        /// Center Levene's test on medians instead of means.
        #[arg(long)]
        median: bool,
    },
    /// Run several stages in dependency order.
    Run {
        /// Comma-separated stages; defaults to all.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        ingest: IngestArgs,
        #[command(flatten)]
        goals: GoalArgs,
        #[command(flatten)]
        analyze: AnalyzeArgs,
    },
    /// Show the participants retrieval picks for a goal.
    Select {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=17))]
        goal: u8,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
}

fn gateway(g: &GlobalArgs) -> Result<Gateway> {
    let config = ProviderConfig {
        seed: (g.provider == ProviderKind::Mock).then_some(g.seed),
        timeout_secs: g.timeout,
        ..Default::default()
    };
    let provider: Arc<dyn Provider> = match g.provider {
        ProviderKind::Mock => Arc::new(MockProvider::new(g.seed)),
        ProviderKind::Live => Arc::new(GeminiProvider::from_env(config.timeout())?),
    };
    let gw = Gateway::new(provider, config);
    Ok(match g.rate {
        Some(r) => gw.with_rate_limit(r),
        None => gw,
    })
}

fn ingest_config(g: &GlobalArgs, a: &IngestArgs) -> Result<IngestConfig> {
    let window = match &a.window {
        Some(spec) => CorpusWindow::parse(spec, g.dataset.clone())?,
        None => CorpusWindow::for_dataset(&g.dataset)
            .with_context(|| format!("dataset {} has no default window; pass --window", g.dataset))?,
    };
    let source: Arc<dyn VideoSource> = match &g.fixtures {
        Some(dir) => Arc::new(FixtureSource::open(dir)?),
        None => {
            let yt = YouTubeSource::from_env(Duration::from_secs(g.timeout))?;
            Arc::new(match &a.record {
                Some(dir) => yt.recording_to(dir),
                None => yt,
            })
        }
    };
    Ok(IngestConfig { source, channel: a.channel.clone(), window, page_limit: a.pages, rate: g.rate })
}

fn base_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let prompts = match &g.prompts {
        Some(dir) => PromptSet::from_dir(dir)?,
        None => PromptSet::builtin(),
    };
    Ok(PipelineConfig { prompts, kg_guide: KG_GUIDE.to_string(), ..Default::default() })
}

fn apply_goals(config: &mut PipelineConfig, a: &GoalArgs) {
    config.cap = a.cap;
    config.goals = (!a.goals.is_empty()).then(|| a.goals.clone());
}

fn apply_analyze(config: &mut PipelineConfig, a: &AnalyzeArgs) {
    config.analysis_dir = a.heatmap_dir.clone();
    config.palette = a.palette;
    if a.single_only {
        config.diagonal = DiagonalMode::SingleOnly;
    }
}

fn run_stages(g: &GlobalArgs, stages: &[Stage], config: &PipelineConfig) -> Result<RunReport> {
    let store = Store::open(&g.store).with_context(|| format!("opening {}", g.store.display()))?;
    Ok(run_pipeline(&store, &g.dataset, stages, &gateway(g)?, config)?)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialise"));
}

fn stats(g: &GlobalArgs, tags: Option<&Path>, graphs: &[PathBuf], single_only: bool, median: bool) -> Result<()> {
    let mode = if single_only { DiagonalMode::SingleOnly } else { DiagonalMode::AnyCardinality };
    let center = if median { LeveneCenter::Median } else { LeveneCenter::Mean };
    let mut out = serde_json::Map::new();
    if let Some(path) = tags {
        let sets = load_tag_sets(path)?;
        let matrix = CooccurrenceMatrix::from_tag_sets(g.dataset.clone(), &sets, mode)?;
        out.insert("tag_stats".into(), json!(tag_statistics(&sets)?));
        out.insert("argmax".into(), json!(matrix.argmax()));
        out.insert("zero_pairs".into(), json!(zero_pair_report(&matrix)));
        out.insert("cooccurrence".into(), json!(matrix));
    }
    if let [a, b] = graphs {
        let (ga, gb) = (load_graphs(a)?, load_graphs(b)?);
        out.insert("totals".into(), json!([graph_totals(&ga)?, graph_totals(&gb)?]));
        let reports = [Metric::Nodes, Metric::Links]
            .into_iter()
            .map(|m| compare_datasets(m, &ga, &gb, center))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert("comparison".into(), json!(reports));
    }
    if tags.is_none() && graphs.is_empty() {
        let store = Store::open(&g.store)?;
        let snap = store.snapshot(&g.dataset)?;
        out.insert("counts".into(), json!(snap.counts()?));
        for name in [
            analysis_names::TAG_STATS,
            analysis_names::GRAPH_TOTALS,
            analysis_names::ZERO_PAIRS,
            analysis_names::METRICS,
            analysis_names::COMPARISON,
        ] {
            if let Some(v) = snap.analysis::<serde_json::Value>(name)? {
                out.insert(name.into(), v);
            }
        }
    }
    print_json(&serde_json::Value::Object(out));
    Ok(())
}

fn select(g: &GlobalArgs, goal: u8, cap: usize) -> Result<()> {
    let (vectors, manifest) = index_paths(&g.store, &g.dataset);
    if !manifest.exists() {
        bail!("no embedding index for {}; run `goalforge index` first", g.dataset);
    }
    let index = EmbeddingIndex::load(&vectors, &manifest)?;
    let set = select_participants(goal, &index, cap)?;
    let rows: Vec<_> = set
        .members
        .iter()
        .zip(&set.scores)
        .map(|(id, score)| json!({"video_id": id, "score": score}))
        .collect();
    print_json(&json!({"goal": goal, "participants": rows}));
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    let mut config = base_config(g)?;
    let stages = match cli.command {
        Command::Ingest(a) => {
            config.ingest = Some(ingest_config(g, &a)?);
            vec![Stage::Ingest]
        }
        Command::Annotate => vec![Stage::Annotate],
        Command::Index => vec![Stage::Index],
        Command::Simulate(a) => {
            apply_goals(&mut config, &a);
            vec![Stage::Simulate]
        }
        Command::Extract(a) => {
            apply_goals(&mut config, &a);
            vec![Stage::Extract]
        }
        Command::Synthesize => vec![Stage::Synthesize],
        Command::Analyze(a) => {
            apply_analyze(&mut config, &a);
            vec![Stage::Analyze]
        }
        Command::ExportSite { out, palette } => {
            config.out_dir = Some(out);
            config.palette = palette;
            vec![Stage::Export]
        }
        Command::Run { stages, out, ingest, goals, analyze } => {
            let stages = if stages.is_empty() { Stage::ALL.to_vec() } else { stages };
            if stages.contains(&Stage::Ingest) {
                config.ingest = Some(ingest_config(g, &ingest)?);
            }
            apply_goals(&mut config, &goals);
            apply_analyze(&mut config, &analyze);
            config.out_dir = out;
            stages
        }
        Command::Stats { tags, graphs, single_only, median } => {
            stats(g, tags.as_deref(), &graphs, single_only, median)?;
            return Ok(true);
        }
        Command::Select { goal, cap } => {
            select(g, goal, cap)?;
            return Ok(true);
        }
    };
    let report = run_stages(g, &stages, &config)?;
    print_json(&json!(report));
    if !report.is_success() {
        log::error!("{} item(s) failed", report.failure_count());
    }
    Ok(report.is_success())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_parses_stage_lists() {
        let cli = Cli::try_parse_from(["goalforge", "run", "--stages", "ingest,export", "--dataset", "preliminary"]).unwrap();
        match cli.command {
            Command::Run { stages, .. } => assert_eq!(stages, [Stage::Ingest, Stage::Export]),
            _ => panic!("expected run"),
        }
        assert_eq!(cli.global.dataset, Dataset::Preliminary);
        assert!(Cli::try_parse_from(["goalforge", "simulate", "--goal", "18"]).is_err());
    }
}
