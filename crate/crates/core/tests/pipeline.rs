mod common;

use common::{failing_rules, full_run, mock_gateway};
use goalforge_core::analytics::{CooccurrenceMatrix, KgMetrics};
use goalforge_core::export::verify_bundle;
use goalforge_core::ingest::SkipReason;
use goalforge_core::pipeline::{analysis_names, run_pipeline, PipelineError, Stage};
use goalforge_core::store::Store;
use goalforge_core::Dataset;

#[test]
fn full_mock_run_extracts_all_goals() {
    let dir = tempfile::tempdir().unwrap();
    let (store, report) = full_run(dir.path(), &Dataset::Preliminary, 7, failing_rules());
    let ingest = report.stage(Stage::Ingest).unwrap();
    assert_eq!(ingest.counts["collected"], 56);
    assert_eq!(ingest.counts["usable"], 51);
    assert_eq!(ingest.skips["tk23short"], "BadDuration");
    assert_eq!(ingest.skips["tk23member"], "MemberOnly");

    let annotate = report.stage(Stage::Annotate).unwrap();
    assert_eq!(annotate.counts["annotated"], 49);
    assert_eq!(annotate.skips.len(), 2);
    assert!(annotate.failures.is_empty());
    let talks = store.talks(&Dataset::Preliminary).unwrap();
    let demoted = talks.iter().find(|t| t.video_id == "tk23041").unwrap();
    assert_eq!(demoted.skip_reason, Some(SkipReason::SafetyBlocked));

    assert_eq!(report.stage(Stage::Simulate).unwrap().counts["transcripts"], 17);
    assert_eq!(report.stage(Stage::Extract).unwrap().counts["graphs"], 17);
    assert!(report.stage(Stage::Synthesize).unwrap().counts["proposals"] >= 1);
    assert!(report.is_success(), "{report:#?}");

    let rows: Vec<KgMetrics> = store.analysis(&Dataset::Preliminary, analysis_names::METRICS).unwrap().unwrap();
    assert_eq!(rows.len(), 17);
    let m: CooccurrenceMatrix = store.analysis(&Dataset::Preliminary, analysis_names::COOCCURRENCE).unwrap().unwrap();
    assert!(m.is_symmetric());
    assert_eq!(verify_bundle(&dir.path().join("site")).unwrap().files.len(), 17 + 3);
}

#[test]
fn stages_can_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = Dataset::Formal;
    let store = Store::open(dir.path().join("store.db")).unwrap();
    let gateway = mock_gateway(3, vec![]);
    let config = common::config(&dataset, Some(dir.path().join("site")));
    let err = run_pipeline(&store, &dataset, &[Stage::Extract], &gateway, &config).unwrap_err();
    assert!(matches!(err, PipelineError::StagePrerequisiteMissing { stage: Stage::Extract, .. }));
    for stage in Stage::ALL {
        let report = run_pipeline(&store, &dataset, &[stage], &gateway, &config).unwrap();
        assert!(report.is_success(), "{stage}: {report:#?}");
    }
    assert_eq!(store.counts(&dataset).unwrap().graphs, 17);
    // Annotating again finds nothing left to do.
    let again = run_pipeline(&store, &dataset, &[Stage::Annotate], &gateway, &config).unwrap();
    let annotate = again.stage(Stage::Annotate).unwrap();
    assert_eq!(annotate.counts["annotated"], 0);
    assert_eq!(annotate.counts["already_done"], 85);
}

#[test]
fn comparison_is_stored_once_both_datasets_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = full_run(dir.path(), &Dataset::Preliminary, 5, vec![]);
    drop(store);
    let store = Store::open(dir.path().join("store.db")).unwrap();
    let config = common::config(&Dataset::Formal, None);
    let stages = [Stage::Ingest, Stage::Annotate, Stage::Index, Stage::Simulate, Stage::Extract, Stage::Analyze];
    run_pipeline(&store, &Dataset::Formal, &stages, &mock_gateway(5, vec![]), &config).unwrap();
    let reports: Vec<serde_json::Value> =
        store.analysis(&Dataset::Formal, analysis_names::COMPARISON).unwrap().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["metric"], "nodes");
}

#[test]
fn exported_bundle_validates_against_published_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = full_run(dir.path(), &Dataset::Formal, 11, vec![]);
    let schema: serde_json::Value = serde_json::from_str(goalforge_core::export::BUNDLE_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let site = dir.path().join("site");
    let manifest = verify_bundle(&site).unwrap();
    for path in manifest.files.iter().map(|f| f.path.as_str()).chain(["manifest.json"]) {
        let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(site.join(path)).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{path}: {errors:?}");
    }
    assert_eq!(manifest.seed, Some(11));
    assert_eq!(manifest.provider.as_deref(), Some("mock"));
}
