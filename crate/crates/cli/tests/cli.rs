use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn afa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small bundle into `dir` and returns its config path.
fn bundle(dir: &Path) -> PathBuf {
    let params = dir.join("params.json");
    std::fs::write(
        &params,
        json!({"corpus": {"articles": 120, "duplicate_groups": 4}, "n_total": 30, "annotated": 12, "anchored": 8, "judges": 2})
            .to_string(),
    )
    .unwrap();
    let out = afa(&["fixtures", "bundle", "--seed", "5", "--out", dir.to_str().unwrap(), "--params", params.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("config.json")
}

fn edit_config(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn full_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    let c = config.to_str().unwrap();
    let run = afa(&["all", "--config", c]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let text = stdout(&run);
    assert!(text.contains("analyze"), "{text}");
    assert!(text.contains("manifest "), "{text}");
    let report = afa(&["report", "--config", c]);
    assert_eq!(code(&report), 0, "{}", stderr(&report));
    let text = stdout(&report);
    assert!(text.contains("Krippendorff's alpha"), "{text}");
    assert!(text.contains("Decomposed verification"), "{text}");
}

#[test]
fn missing_upstream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    let out = afa(&["sample", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("afa ingest"), "{}", stderr(&out));

    let out = afa(&["report", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn config_and_usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    let c = config.to_str().unwrap();

    assert_eq!(code(&afa(&["all", "--config", c, "--lambda", "1.5"])), 1);
    assert_eq!(code(&afa(&["all", "--config", dir.path().join("absent.json").to_str().unwrap()])), 1);
    edit_config(&config, |v| v["sampling"]["surprise"] = json!(true));
    let out = afa(&["all", "--config", c]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("surprise"), "{}", stderr(&out));

    assert_eq!(code(&afa(&["frobnicate"])), 1);
    assert_eq!(code(&afa(&["sample"])), 1);
    assert_eq!(code(&afa(&["--help"])), 0);
    assert_eq!(code(&afa(&["--version"])), 0);
}

#[test]
fn unset_token_variable_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    edit_config(&config, |v| {
        v["extraction"]["client"] = json!({"kind": "http", "model": "m", "endpoint": "http://127.0.0.1:9/v1", "auth_token_env": "AFA_TEST_UNSET_TOKEN"});
    });
    let out = afa(&["all", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("AFA_TEST_UNSET_TOKEN"));
}

#[test]
fn unreachable_endpoint_exits_4_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    let c = config.to_str().unwrap();
    assert_eq!(code(&afa(&["enrich", "--config", c])), 3);
    for stage in ["ingest", "dedup", "sample", "enrich"] {
        let out = afa(&[stage, "--config", c]);
        assert_eq!(code(&out), 0, "{stage}: {}", stderr(&out));
    }
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    edit_config(&config, |v| {
        v["extraction"]["client"] = json!({"kind": "http", "model": "m", "endpoint": format!("http://127.0.0.1:{port}/v1"), "timeout_secs": 2});
        v["extraction"]["backoff"] = json!({"initial_ms": 0, "factor": 2.0, "max_ms": 0, "max_transport_retries": 1});
    });
    let out = afa(&["extract", "--config", c]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(dir.path().join("out/extraction_report.json").exists());
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = bundle(dir.path());
    let out = afa(&["all", "--config", config.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("ingest"), "{text}");
    assert!(text.contains("sample     reads [dedup] writes [sample_manifest.json, sample.jsonl]"), "{text}");
    assert!(lines.last().unwrap().starts_with("dry run: nothing written to"), "{text}");
    assert!(!dir.path().join("out").exists());

    let out = afa(&["verify", "--config", config.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code(&out), 3, "verify before extract must fail the dry run too");
}

#[test]
fn fixtures_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["corpus", "annotations", "transcripts", "timeseries"] {
        let (a, b) = (dir.path().join(format!("{kind}-a")), dir.path().join(format!("{kind}-b")));
        for d in [&a, &b] {
            let out = afa(&["fixtures", kind, "--seed", "9", "--out", d.to_str().unwrap()]);
            assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        }
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty(), "{kind} wrote nothing");
        for n in names {
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{kind}/{n:?}");
        }
    }
    let other = dir.path().join("corpus-c");
    afa(&["fixtures", "corpus", "--seed", "10", "--out", other.to_str().unwrap()]);
    assert_ne!(
        std::fs::read(other.join("corpus.jsonl")).unwrap(),
        std::fs::read(dir.path().join("corpus-a/corpus.jsonl")).unwrap()
    );
}
