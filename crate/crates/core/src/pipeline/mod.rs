//! Stage orchestration behind one declarative config.
//!
//! Stages read their inputs from the outputs directory of earlier stages and
//! write their own there, so each can be re-run alone once its upstream
//! outputs exist. Every run updates `manifest.json` (content hashes of all
//! outputs) and appends to `run.log`.

mod config;
mod manifest;
mod stages;

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    interpolate_env, AnalyticsOptions, ClientSpec, ConsensusOptions, DedupOptions, DvfOptions, EnrichmentOptions,
    ExtractionOptions, IngestOptions, Paths, PipelineConfig, ReferenceAllocation, ReferenceStratum, SamplingOptions,
    ScorerSpec, Window,
};
pub use manifest::{FileDigest, RunManifest, StageRecord, MANIFEST_FORMAT};
pub use stages::{ingest_articles, stratum_of, IngestReport, IngestResult};

use crate::extraction::{ChatClient, SyntheticClient, TranscriptClient};
use crate::io::{read_json, write_json, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Ingest,
    Dedup,
    Sample,
    Enrich,
    Extract,
    Consensus,
    Agree,
    Verify,
    Analyze,
    All,
}

impl PipelineStage {
    /// Every concrete stage in execution order.
    pub const CHAIN: [PipelineStage; 9] = [
        PipelineStage::Ingest,
        PipelineStage::Dedup,
        PipelineStage::Sample,
        PipelineStage::Enrich,
        PipelineStage::Extract,
        PipelineStage::Consensus,
        PipelineStage::Agree,
        PipelineStage::Verify,
        PipelineStage::Analyze,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Dedup => "dedup",
            PipelineStage::Sample => "sample",
            PipelineStage::Enrich => "enrich",
            PipelineStage::Extract => "extract",
            PipelineStage::Consensus => "consensus",
            PipelineStage::Agree => "agree",
            PipelineStage::Verify => "verify",
            PipelineStage::Analyze => "analyze",
            PipelineStage::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::CHAIN
            .iter()
            .copied()
            .chain(std::iter::once(PipelineStage::All))
            .find(|st| st.as_str() == s)
    }

    /// Files whose presence marks the stage as done.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            PipelineStage::Ingest => &["articles.jsonl", "ingest_report.json"],
            PipelineStage::Dedup => &["deduped.jsonl", "dedup_report.json"],
            PipelineStage::Sample => &["sample_manifest.json", "sample.jsonl"],
            PipelineStage::Enrich => &["enrichment_report.json", "extraction_set.jsonl"],
            PipelineStage::Extract => &["afa_records.jsonl", "extraction_transcripts.jsonl", "extraction_report.json"],
            PipelineStage::Consensus => &["gold.jsonl", "labelings.jsonl", "consensus_report.json"],
            PipelineStage::Agree => &["agreement.csv", "agreement.txt"],
            PipelineStage::Verify => &["dvf_report.json", "dvf_per_judge.csv", "dvf.txt"],
            PipelineStage::Analyze => &["analysis.txt"],
            PipelineStage::All => &[],
        }
    }

    /// Upstream stages whose outputs this stage reads.
    pub fn requires(self, config: &PipelineConfig) -> Vec<PipelineStage> {
        use PipelineStage::*;
        match self {
            Ingest | All => vec![],
            Dedup => vec![Ingest],
            Sample => vec![Dedup],
            Enrich => vec![Dedup, Sample],
            Extract => vec![Enrich],
            Consensus if stages::annotations_are_csv(config) => vec![Ingest],
            Consensus => vec![],
            Agree => vec![Consensus],
            Verify | Analyze => vec![Enrich, Extract],
        }
    }

    /// Upstream stages read when their outputs exist.
    pub fn optional(self) -> Vec<PipelineStage> {
        match self {
            PipelineStage::Agree => vec![PipelineStage::Enrich, PipelineStage::Extract],
            _ => vec![],
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("stage `{stage}` needs the outputs of `{required}` ({} is missing); run `afa {required}` first", missing.display())]
    Dependency {
        stage: PipelineStage,
        required: PipelineStage,
        missing: PathBuf,
    },
    #[error("missing inputs: {0}")]
    MissingInputs(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl PipelineError {
    /// 1 usage/config, 2 data, 3 upstream dependency, 4 transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Dependency { .. } | PipelineError::MissingInputs(_) => 3,
            PipelineError::Transport(_) => 4,
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// Builds chat clients from their config entries.
pub trait ClientFactory: Sync {
    fn build(&self, spec: &ClientSpec, config: &PipelineConfig) -> Result<Box<dyn ChatClient>, PipelineError>;
}

/// Synthetic and transcript clients; `http` entries are rejected.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinClients;

impl ClientFactory for BuiltinClients {
    fn build(&self, spec: &ClientSpec, config: &PipelineConfig) -> Result<Box<dyn ChatClient>, PipelineError> {
        match spec {
            ClientSpec::Synthetic { model } => Ok(Box::new(SyntheticClient::new(model.clone()))),
            ClientSpec::Transcript { model, path } => {
                Ok(Box::new(TranscriptClient::load(model.clone(), &config.resolve(path))?))
            }
            ClientSpec::Http { model, .. } => Err(PipelineError::Config(format!(
                "client `{model}`: http clients are not available in this build"
            ))),
        }
    }
}

/// Append-only human-readable log of a run, mirrored to the `log` crate.
pub struct RunLog {
    file: File,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| IoError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self { file })
    }

    pub fn line(&mut self, msg: impl AsRef<str>) {
        let msg = msg.as_ref();
        log::info!("{msg}");
        // the log is advisory; a failed write must not fail the stage
        let _ = writeln!(self.file, "{msg}");
    }

    pub fn warn(&mut self, msg: impl AsRef<str>) {
        let msg = msg.as_ref();
        log::warn!("{msg}");
        let _ = writeln!(self.file, "warning: {msg}");
    }
}

/// Concrete stages `target` expands to. `all` skips consensus and agree
/// without annotations and verify without judges.
pub fn expand(target: PipelineStage, config: &PipelineConfig) -> Vec<PipelineStage> {
    if target != PipelineStage::All {
        return vec![target];
    }
    PipelineStage::CHAIN
        .iter()
        .copied()
        .filter(|s| match s {
            PipelineStage::Consensus | PipelineStage::Agree => config.paths.annotations.is_some(),
            PipelineStage::Verify => !config.dvf.judges.is_empty(),
            _ => true,
        })
        .collect()
}

fn closure(stage: PipelineStage, config: &PipelineConfig) -> Vec<PipelineStage> {
    let mut out = Vec::new();
    let mut todo = stage.requires(config);
    while let Some(s) = todo.pop() {
        if !out.contains(&s) {
            out.push(s);
            todo.extend(s.requires(config));
        }
    }
    out.sort();
    out
}

fn stage_done(stage: PipelineStage, out: &Path) -> Option<PathBuf> {
    stage.outputs().iter().map(|f| out.join(f)).find(|p| !p.exists())
}

/// Fails with the earliest upstream stage whose outputs are missing.
/// Stages in `will_run` count as present.
fn check_dependencies(stage: PipelineStage, config: &PipelineConfig, will_run: &[PipelineStage]) -> Result<(), PipelineError> {
    let out = config.outputs_dir();
    for up in closure(stage, config) {
        if will_run.contains(&up) {
            continue;
        }
        if let Some(missing) = stage_done(up, &out) {
            return Err(PipelineError::Dependency {
                stage,
                required: up,
                missing,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedStage {
    pub stage: PipelineStage,
    pub requires: Vec<PipelineStage>,
    pub writes: Vec<String>,
}

/// What `run` would do, checking config-level requirements and upstream
/// outputs without executing anything.
pub fn plan(target: PipelineStage, config: &PipelineConfig) -> Result<Vec<PlannedStage>, PipelineError> {
    let stages = expand(target, config);
    let mut planned = Vec::new();
    for (i, &s) in stages.iter().enumerate() {
        stages::check_configured(s, config)?;
        check_dependencies(s, config, &stages[..i])?;
        planned.push(PlannedStage {
            stage: s,
            requires: s.requires(config),
            writes: s.outputs().iter().map(|f| f.to_string()).collect(),
        });
    }
    Ok(planned)
}

const MANIFEST_FILE: &str = "manifest.json";
const LOG_FILE: &str = "run.log";

fn load_manifest(out: &Path, config: &PipelineConfig) -> RunManifest {
    let hash = config.hash();
    match read_json::<RunManifest>(&out.join(MANIFEST_FILE)) {
        Ok(m) if m.config_hash == hash && m.format == MANIFEST_FORMAT => m,
        _ => RunManifest::new(hash, config.seed),
    }
}

/// Runs `target` (or the whole chain for `all`) and returns the updated
/// manifest. A previous manifest is kept when its config hash matches.
pub fn run(target: PipelineStage, config: &PipelineConfig, clients: &dyn ClientFactory) -> Result<RunManifest, PipelineError> {
    let stages = expand(target, config);
    for (i, &s) in stages.iter().enumerate() {
        stages::check_configured(s, config)?;
        check_dependencies(s, config, &stages[..i])?;
    }
    let out = config.outputs_dir();
    fs::create_dir_all(&out).map_err(|source| IoError::Io {
        path: out.clone(),
        source,
    })?;
    let mut log = RunLog::open(&out.join(LOG_FILE))?;
    let mut manifest = load_manifest(&out, config);
    log.line(format!(
        "== run {target}: config {}, seed {}, workers {} ==",
        &manifest.config_hash[..12],
        config.seed,
        config.workers
    ));
    if target == PipelineStage::All {
        for s in PipelineStage::CHAIN.iter().filter(|s| !stages.contains(s)) {
            log.line(format!("{s}: skipped (not configured)"));
        }
    }
    for stage in stages {
        let t0 = Instant::now();
        let produced = crate::par::install(config.workers, || stages::execute(stage, config, clients, &mut log))?;
        let outputs = produced
            .outputs
            .iter()
            .map(|name| FileDigest::of(&out.join(name), name.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let elapsed_ms = t0.elapsed().as_millis() as u64;
        log.line(format!("{stage}: done in {elapsed_ms} ms, {} output(s)", outputs.len()));
        manifest.record(StageRecord {
            stage,
            inputs: produced.inputs,
            outputs,
            elapsed_ms,
        });
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
    }
    Ok(manifest)
}

/// The text reports written by agree, verify and analyze, concatenated.
pub fn report(config: &PipelineConfig) -> Result<String, PipelineError> {
    let out = config.outputs_dir();
    let parts: Vec<String> = ["agreement.txt", "dvf.txt", "analysis.txt"]
        .iter()
        .map(|f| out.join(f))
        .filter(|p| p.exists())
        .map(|p| crate::io::read_text(&p))
        .collect::<Result<_, _>>()?;
    if parts.is_empty() {
        return Err(PipelineError::MissingInputs(format!(
            "no stage reports in {}; run `afa agree`, `afa verify` or `afa analyze` first",
            out.display()
        )));
    }
    Ok(parts.join("\n"))
}
