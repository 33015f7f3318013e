//! The declarative run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::active_learning::EnrichmentConfig;
use crate::agreement::SpanMatchMode;
use crate::analytics::{Correction, GroupBy, Penalty};
use crate::consensus::ConsensusConfig;
use crate::corpus::{DedupConfig, IngestConfig, MinHashParams};
use crate::dvf::{JudgeConfig, DEFAULT_TOLERANCE};
use crate::extraction::{Backoff, ExtractionConfig, StageSettings};
use crate::sampler::{validate_strata, KBounds, RemainderPolicy, SampleConfig, StratumSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw article JSONL.
    pub corpus: PathBuf,
    /// Embedding JSONL (header line, then one record per article).
    pub embeddings: PathBuf,
    /// Annotator labelings: JSONL, or a Zooniverse CSV export (`.csv`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    /// Human DVF reference scores, JSONL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_anchor: Option<PathBuf>,
    /// Climate lexicon JSON; the built-in list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub outputs: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub min_timestamp: Option<DateTime<Utc>>,
    pub max_timestamp: Option<DateTime<Utc>>,
    pub boilerplate_min_articles: usize,
    /// Allowed subject codes; the built-in climate set when absent.
    pub djid_codes: Option<BTreeSet<String>>,
    /// Keep articles that lack an allowed code but match the lexicon.
    pub include_lexicon_matches: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        let base = IngestConfig::default();
        Self {
            min_timestamp: None,
            max_timestamp: None,
            boilerplate_min_articles: base.boilerplate_min_articles,
            djid_codes: None,
            include_lexicon_matches: true,
        }
    }
}

impl IngestOptions {
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            min_timestamp: self.min_timestamp,
            max_timestamp: self.max_timestamp,
            boilerplate_min_articles: self.boilerplate_min_articles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupOptions {
    pub threshold: f64,
    pub num_perm: usize,
    pub shingle_width: usize,
    pub bands: usize,
    pub rows: usize,
    /// MinHash seed; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for DedupOptions {
    fn default() -> Self {
        let d = DedupConfig::default();
        Self {
            threshold: d.threshold,
            num_perm: d.minhash.num_perm,
            shingle_width: d.minhash.shingle_width,
            bands: d.bands,
            rows: d.rows,
            seed: None,
        }
    }
}

impl DedupOptions {
    pub fn dedup_config(&self, run_seed: u64) -> DedupConfig {
        DedupConfig {
            threshold: self.threshold,
            minhash: MinHashParams {
                num_perm: self.num_perm,
                shingle_width: self.shingle_width,
                seed: self.seed.unwrap_or(run_seed),
            },
            bands: self.bands,
            rows: self.rows,
        }
    }
}

/// An externally published allocation table to compare the formula with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceAllocation {
    pub n_total: u64,
    /// Independent of `sampling.remainder_policy`; published tables use the
    /// plain floor formula.
    #[serde(default)]
    pub remainder_policy: RemainderPolicy,
    pub strata: Vec<ReferenceStratum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceStratum {
    pub label: String,
    pub population: u64,
    pub reported_sample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    pub n_total: u64,
    pub lambda: f64,
    pub k_min: usize,
    pub k_max: Option<usize>,
    pub remainder_policy: RemainderPolicy,
    pub headline_weight: f64,
    pub lead_weight: f64,
    pub reference: Option<ReferenceAllocation>,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        let s = SampleConfig::default();
        Self {
            n_total: s.n_total,
            lambda: s.lambda,
            k_min: s.k_bounds.k_min,
            k_max: s.k_bounds.k_max,
            remainder_policy: s.remainder_policy,
            headline_weight: s.headline_weight,
            lead_weight: s.lead_weight,
            reference: None,
        }
    }
}

impl SamplingOptions {
    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            n_total: self.n_total,
            lambda: self.lambda,
            k_bounds: KBounds {
                k_min: self.k_min,
                k_max: self.k_max,
            },
            remainder_policy: self.remainder_policy,
            headline_weight: self.headline_weight,
            lead_weight: self.lead_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Argument-cue density; needs no model.
    Lexical,
    /// An external process speaking the line protocol of the subprocess scorer.
    Subprocess {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        num_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichmentOptions {
    pub enabled: bool,
    /// Most articles added on top of the sample.
    pub budget: usize,
    pub scorer: ScorerSpec,
    pub percentile: f64,
    pub bins: usize,
    pub jsd_threshold: f64,
    pub max_rounds: usize,
    pub cap: Option<usize>,
}

impl Default for EnrichmentOptions {
    fn default() -> Self {
        let e = EnrichmentConfig::default();
        Self {
            enabled: false,
            budget: 0,
            scorer: ScorerSpec::Lexical,
            percentile: e.percentile,
            bins: e.bins,
            jsd_threshold: e.jsd_threshold,
            max_rounds: e.max_rounds,
            cap: e.cap,
        }
    }
}

impl EnrichmentOptions {
    pub fn enrichment_config(&self, workers: usize) -> EnrichmentConfig {
        EnrichmentConfig {
            percentile: self.percentile,
            bins: self.bins,
            jsd_threshold: self.jsd_threshold,
            max_rounds: self.max_rounds,
            cap: self.cap,
            workers,
        }
    }
}

/// A chat endpoint. Only `synthetic` and `transcript` are built into the
/// library; `http` needs a client factory that speaks HTTP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientSpec {
    Synthetic {
        model: String,
    },
    Transcript {
        model: String,
        path: PathBuf,
    },
    Http {
        model: String,
        endpoint: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        auth_token_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    120
}

impl ClientSpec {
    pub fn model(&self) -> &str {
        match self {
            ClientSpec::Synthetic { model } | ClientSpec::Transcript { model, .. } | ClientSpec::Http { model, .. } => model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionOptions {
    pub client: ClientSpec,
    #[serde(default)]
    pub max_retries: Option<usize>,
    #[serde(default)]
    pub settings: Option<StageSettings>,
    #[serde(default)]
    pub backoff: Option<Backoff>,
    #[serde(default = "yes")]
    pub check_faithfulness: bool,
    /// Timestamp stamped on every record instead of the wall clock, for
    /// reproducible outputs.
    #[serde(default)]
    pub fixed_clock: Option<DateTime<Utc>>,
}

fn yes() -> bool {
    true
}

impl ExtractionOptions {
    pub fn extraction_config(&self) -> ExtractionConfig {
        let d = ExtractionConfig::default();
        ExtractionConfig {
            settings: self.settings.clone().unwrap_or(d.settings),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
            backoff: self.backoff.clone().unwrap_or(d.backoff),
            check_faithfulness: self.check_faithfulness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusOptions {
    pub tau: f64,
    pub f1_threshold: f64,
    pub span_match: SpanMatchMode,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        let c = ConsensusConfig::default();
        Self {
            tau: c.tau,
            f1_threshold: c.f1_threshold,
            span_match: SpanMatchMode::default(),
        }
    }
}

impl ConsensusOptions {
    pub fn consensus_config(&self) -> ConsensusConfig {
        ConsensusConfig {
            tau: self.tau,
            f1_threshold: self.f1_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvfOptions {
    pub judges: Vec<ClientSpec>,
    pub tolerance: f64,
    pub max_retries: usize,
    pub backoff: Option<Backoff>,
}

impl Default for DvfOptions {
    fn default() -> Self {
        Self {
            judges: Vec::new(),
            tolerance: DEFAULT_TOLERANCE,
            max_retries: JudgeConfig::default().max_retries,
            backoff: None,
        }
    }
}

impl DvfOptions {
    pub fn judge_config(&self, workers: usize) -> JudgeConfig {
        let d = JudgeConfig::default();
        JudgeConfig {
            settings: d.settings,
            max_retries: self.max_retries,
            backoff: self.backoff.clone().unwrap_or(d.backoff),
            workers,
        }
    }
}

/// A labeled date window, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsOptions {
    pub correction: Correction,
    pub penalty: Penalty,
    pub sweep_points: usize,
    pub group_by: GroupBy,
    /// Frame-shift windows; the first and last strata when absent.
    pub early: Option<Window>,
    pub late: Option<Window>,
}

impl Default for AnalyticsOptions {
    fn default() -> Self {
        Self {
            correction: Correction::Bonferroni,
            penalty: Penalty::Bic,
            sweep_points: 10,
            group_by: GroupBy::default(),
            early: None,
            late: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Bound on threads and in-flight requests; 0 picks automatically.
    #[serde(default)]
    pub workers: usize,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestOptions,
    #[serde(default)]
    pub dedup: DedupOptions,
    pub stratification: Vec<StratumSpec>,
    #[serde(default)]
    pub sampling: SamplingOptions,
    #[serde(default)]
    pub enrichment: EnrichmentOptions,
    pub extraction: ExtractionOptions,
    #[serde(default)]
    pub consensus: ConsensusOptions,
    #[serde(default)]
    pub dvf: DvfOptions,
    #[serde(default)]
    pub analytics: AnalyticsOptions,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn interpolate_str(s: &str, at: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, PipelineError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 2..];
        let end = tail
            .find('}')
            .ok_or_else(|| PipelineError::Config(format!("{at}: unterminated `${{` in `{s}`")))?;
        let name = &tail[..end];
        let value = lookup(name)
            .ok_or_else(|| PipelineError::Config(format!("{at}: environment variable `{name}` is not set")))?;
        out.push_str(&value);
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Replaces `${NAME}` in every string value.
pub fn interpolate_env(value: &mut Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
    fn walk(v: &mut Value, at: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
        match v {
            Value::String(s) if s.contains("${") => *s = interpolate_str(s, at, lookup)?,
            Value::Array(items) => {
                for (i, x) in items.iter_mut().enumerate() {
                    walk(x, &format!("{at}[{i}]"), lookup)?;
                }
            }
            Value::Object(m) => {
                for (k, x) in m.iter_mut() {
                    let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                    walk(x, &path, lookup)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
    walk(value, "", lookup)
}

fn bad(path: &str, message: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(format!("{path}: {message}"))
}

impl PipelineConfig {
    /// Parses config text, interpolating `${VAR}` from the process
    /// environment. Relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        Self::from_json_with(text, base_dir, &|k| std::env::var(k).ok())
    }

    pub fn from_json_with(
        text: &str,
        base_dir: &Path,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, PipelineError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("invalid JSON: {e}")))?;
        interpolate_env(&mut value, lookup)?;
        let mut config: PipelineConfig =
            serde_json::from_value(value).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn outputs_dir(&self) -> PathBuf {
        self.resolve(&self.paths.outputs)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.stratification.is_empty() {
            return Err(bad("stratification", "at least one stratum is required"));
        }
        validate_strata(&self.stratification).map_err(|e| bad("stratification", e))?;
        let s = &self.sampling;
        if s.n_total == 0 {
            return Err(bad("sampling.n_total", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&s.lambda) {
            return Err(bad("sampling.lambda", format!("must lie in [0, 1], got {}", s.lambda)));
        }
        if let Some(k) = s.k_max {
            if k < s.k_min {
                return Err(bad("sampling.k_max", format!("{k} is below k_min = {}", s.k_min)));
            }
        }
        let d = &self.dedup;
        if !(d.threshold > 0.0 && d.threshold <= 1.0) {
            return Err(bad("dedup.threshold", format!("must lie in (0, 1], got {}", d.threshold)));
        }
        if d.num_perm < 16 {
            return Err(bad("dedup.num_perm", "must be at least 16"));
        }
        if d.bands == 0 || d.rows == 0 || d.bands * d.rows > d.num_perm {
            return Err(bad("dedup.bands", format!("bands * rows must be positive and at most num_perm = {}", d.num_perm)));
        }
        let e = &self.enrichment;
        if e.enabled && !(e.percentile > 0.0 && e.percentile < 100.0) {
            return Err(bad("enrichment.percentile", "must lie strictly between 0 and 100"));
        }
        let c = &self.consensus;
        if !(c.tau > 0.0 && c.tau <= 1.0) {
            return Err(bad("consensus.tau", format!("must lie in (0, 1], got {}", c.tau)));
        }
        if !(0.0..=1.0).contains(&c.f1_threshold) {
            return Err(bad("consensus.f1_threshold", "must lie in [0, 1]"));
        }
        if !(self.dvf.tolerance >= 0.0) {
            return Err(bad("dvf.tolerance", "must be non-negative"));
        }
        let mut names = BTreeSet::new();
        for (i, j) in self.dvf.judges.iter().enumerate() {
            if !names.insert(j.model()) {
                return Err(bad(&format!("dvf.judges[{i}].model"), format!("duplicate judge `{}`", j.model())));
            }
        }
        for (name, w) in [("analytics.early", &self.analytics.early), ("analytics.late", &self.analytics.late)] {
            if let Some(w) = w {
                if w.start >= w.end {
                    return Err(bad(name, "start must precede end"));
                }
            }
        }
        if let Penalty::Value(v) = self.analytics.penalty {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad("analytics.penalty", "must be finite and non-negative"));
            }
        }
        if let Some(r) = &s.reference {
            if r.strata.is_empty() {
                return Err(bad("sampling.reference.strata", "must not be empty"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with input paths as written.
    /// `workers` and the outputs directory are left out since neither can
    /// change what is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.paths.outputs = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "paths": {"corpus": "c.jsonl", "embeddings": "e.jsonl", "outputs": "out"},
        "stratification": [{"label": "a", "start_date": "2000-01-01", "end_date": "2010-01-01"}],
        "extraction": {"client": {"kind": "http", "model": "m", "endpoint": "${HOST}/v1", "auth_token_env": "TOKEN"}}
    }"#;

    fn env(k: &str) -> Option<String> {
        (k == "HOST").then(|| "https://llm.example".to_string())
    }

    #[test]
    fn interpolates_and_resolves() {
        let c = PipelineConfig::from_json_with(MIN, Path::new("/cfg"), &env).unwrap();
        match &c.extraction.client {
            ClientSpec::Http { endpoint, auth_token_env, .. } => {
                assert_eq!(endpoint, "https://llm.example/v1");
                assert_eq!(auth_token_env.as_deref(), Some("TOKEN"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.outputs_dir(), PathBuf::from("/cfg/out"));
        assert_eq!(c.sampling.lambda, 0.7);
        assert_eq!(c.dedup.num_perm, 128);
    }

    #[test]
    fn missing_variable_names_path() {
        let err = PipelineConfig::from_json_with(MIN, Path::new("."), &|_| None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("extraction.client.endpoint"), "{err}");
        assert!(err.to_string().contains("HOST"));
    }

    #[test]
    fn validation_names_the_field() {
        let text = MIN.replace(r#""stratification""#, r#""sampling": {"lambda": 1.5}, "stratification""#);
        let err = PipelineConfig::from_json_with(&text, Path::new("."), &env).unwrap_err();
        assert!(err.to_string().contains("sampling.lambda"), "{err}");
        let text = MIN.replace(r#""stratification""#, r#""sampling": {"lamda": 0.5}, "stratification""#);
        let err = PipelineConfig::from_json_with(&text, Path::new("."), &env).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn hash_ignores_workers_base_dir_and_outputs() {
        let a = PipelineConfig::from_json_with(MIN, Path::new("/x"), &env).unwrap();
        let mut b = PipelineConfig::from_json_with(MIN, Path::new("/y"), &env).unwrap();
        b.workers = 8;
        b.paths.outputs = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
