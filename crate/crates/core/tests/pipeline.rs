use std::path::Path;

use afa_core::fixtures::{write_bundle, BundleParams, CorpusParams};
use afa_core::pipeline::{plan, run, BuiltinClients, PipelineConfig, PipelineError, PipelineStage};

fn small_bundle(dir: &Path) -> PipelineConfig {
    let params = BundleParams {
        corpus: CorpusParams {
            articles: 120,
            duplicate_groups: 4,
            ..Default::default()
        },
        n_total: 30,
        annotated: 12,
        anchored: 8,
        judges: 2,
        ..Default::default()
    };
    write_bundle(&params, 11, dir).unwrap();
    PipelineConfig::load(&dir.join("config.json")).unwrap()
}

#[test]
fn full_run_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_bundle(dir.path());
    let manifest = run(PipelineStage::All, &config, &BuiltinClients).unwrap();
    let out = config.outputs_dir();
    for s in PipelineStage::CHAIN {
        assert!(manifest.stage(s).is_some(), "{s} missing from the manifest");
        for f in s.outputs() {
            assert!(out.join(f).exists(), "{f}");
        }
    }
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("reference allocation divergence"), "{log}");
    let analysis = std::fs::read_to_string(out.join("analysis.txt")).unwrap();
    assert!(analysis.contains("== Actor shares by period (%) =="));
    let agreement = std::fs::read_to_string(out.join("agreement.txt")).unwrap();
    assert!(agreement.contains("Krippendorff's alpha"));
    assert!(out.join("system_vs_gold.csv").exists());
    assert!(out.join("dvf_human_comparison.csv").exists());
    let text = afa_core::pipeline::report(&config).unwrap();
    assert!(text.contains("Decomposed verification"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_bundle(dir.path());
    let a = run(PipelineStage::All, &config, &BuiltinClients).unwrap();
    std::fs::remove_dir_all(config.outputs_dir()).unwrap();
    let mut again = config.clone();
    again.workers = 3;
    let b = run(PipelineStage::All, &again, &BuiltinClients).unwrap();
    assert_eq!(a.content_hashes(), b.content_hashes());
    assert_eq!(a.content_digest(), b.content_digest());
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_bundle(dir.path());
    let err = run(PipelineStage::Analyze, &config, &BuiltinClients).unwrap_err();
    match err {
        PipelineError::Dependency { required, .. } => assert_eq!(required, PipelineStage::Ingest),
        other => panic!("{other}"),
    }
    for s in [PipelineStage::Ingest, PipelineStage::Dedup, PipelineStage::Sample] {
        run(s, &config, &BuiltinClients).unwrap();
    }
    let err = plan(PipelineStage::Verify, &config).unwrap_err();
    match err {
        PipelineError::Dependency { required, .. } => assert_eq!(required, PipelineStage::Enrich),
        other => panic!("{other}"),
    }
    // consensus reads only the annotation file
    let m = run(PipelineStage::Consensus, &config, &BuiltinClients).unwrap();
    assert!(m.stage(PipelineStage::Ingest).is_some(), "earlier records are kept");
    assert!(m.stage(PipelineStage::Consensus).is_some());
    run(PipelineStage::Agree, &config, &BuiltinClients).unwrap();
    assert!(!config.outputs_dir().join("system_vs_gold.csv").exists());
}

#[test]
fn analyze_without_complete_records_reports_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_bundle(dir.path());
    for s in [PipelineStage::Ingest, PipelineStage::Dedup, PipelineStage::Sample, PipelineStage::Enrich, PipelineStage::Extract] {
        run(s, &config, &BuiltinClients).unwrap();
    }
    let out = config.outputs_dir();
    std::fs::write(out.join("afa_records.jsonl"), "").unwrap();
    run(PipelineStage::Analyze, &config, &BuiltinClients).unwrap();
    let text = std::fs::read_to_string(out.join("analysis.txt")).unwrap();
    assert_eq!(text.matches("no data").count(), 3, "{text}");
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("warning: analyze: no complete extraction records"));
}

#[test]
fn http_client_needs_a_factory() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_bundle(dir.path());
    config.extraction.client = afa_core::pipeline::ClientSpec::Http {
        model: "m".into(),
        endpoint: "http://127.0.0.1:9".into(),
        auth_token_env: None,
        timeout_secs: 1,
    };
    for s in [PipelineStage::Ingest, PipelineStage::Dedup, PipelineStage::Sample, PipelineStage::Enrich] {
        run(s, &config, &BuiltinClients).unwrap();
    }
    let err = run(PipelineStage::Extract, &config, &BuiltinClients).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
