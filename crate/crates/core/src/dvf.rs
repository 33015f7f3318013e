//! Decompositional verification: judge prompts over finished extractions,
//! strict parsing of sub-check scores, cross-judge aggregation and
//! comparison with a human-scored anchor set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::Article;
use crate::extraction::{
    article_block, call_with_backoff, corrective_prompt, unfence, AfaRecord, Backoff, ChatClient,
    ChatRequest, InferenceSettings, LlmExchange, RenderedPrompt, SchemaError, SchemaErrorKind,
    Stage,
};
use crate::io::{read_jsonl, IoError};
use crate::par;

#[derive(Debug, thiserror::Error)]
pub enum DvfError {
    #[error("record `{0}` is incomplete and cannot be judged")]
    IncompleteRecord(String),
    #[error("no article text for record `{0}`")]
    MissingArticle(String),
    #[error("no judges")]
    NoJudges,
    #[error("judge `{0}` appears more than once")]
    DuplicateJudge(String),
    #[error("judge `{judge_id}` scored a different extraction set (missing: {missing:?}, extra: {extra:?})")]
    MismatchedExtractions {
        judge_id: String,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("judges scored no extractions")]
    EmptyScorecards,
    #[error("human anchor set is empty")]
    EmptyAnchor,
    #[error("anchor items not in the report: {0:?}")]
    AnchorNotCovered(Vec<String>),
    #[error("anchor item `{id}`: {dimension} score {value} is outside [0, 1]")]
    AnchorRange {
        id: String,
        dimension: Dimension,
        value: f64,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Completeness,
    Faithfulness,
    Coherence,
    ClimateRelevance,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Completeness,
        Dimension::Faithfulness,
        Dimension::Coherence,
        Dimension::ClimateRelevance,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Dimension::Completeness => "completeness",
            Dimension::Faithfulness => "faithfulness",
            Dimension::Coherence => "coherence",
            Dimension::ClimateRelevance => "climate_relevance",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Dimension::Completeness => "Completeness",
            Dimension::Faithfulness => "Faithfulness",
            Dimension::Coherence => "Coherence",
            Dimension::ClimateRelevance => "Relevance",
        }
    }

    pub fn sub_checks(self) -> &'static [&'static str] {
        match self {
            Dimension::Completeness => &["actors", "stance", "frames", "arguments"],
            Dimension::Faithfulness => &["quote_alignment", "para_equivalence"],
            Dimension::Coherence => &["links_preserved", "schema_wellformed"],
            Dimension::ClimateRelevance => &["on_topic", "peripheral_excluded"],
        }
    }

    fn questions(self) -> &'static [&'static str] {
        match self {
            Dimension::Completeness => &[
                "Are all actors identified?",
                "Is stance extracted?",
                "Are frames assigned?",
                "Are argument structures fully captured?",
            ],
            Dimension::Faithfulness => &[
                "Does each extracted component align with a direct quote?",
                "Is paraphrase semantically equivalent?",
            ],
            Dimension::Coherence => &[
                "Are actor-frame-argument links preserved?",
                "Is the schema well-formed?",
            ],
            Dimension::ClimateRelevance => &[
                "Is the extracted frame genuinely about climate?",
                "Are peripheral issues (e.g., generic market news) excluded?",
            ],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletenessChecks {
    pub actors: f64,
    pub stance: f64,
    pub frames: f64,
    pub arguments: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessChecks {
    pub quote_alignment: f64,
    pub para_equivalence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceChecks {
    pub links_preserved: f64,
    pub schema_wellformed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceChecks {
    pub on_topic: f64,
    pub peripheral_excluded: f64,
}

/// The ten atomic checks of one judgement, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubCheckScores {
    pub completeness: CompletenessChecks,
    pub faithfulness: FaithfulnessChecks,
    pub coherence: CoherenceChecks,
    pub climate_relevance: RelevanceChecks,
}

impl SubCheckScores {
    pub fn uniform(v: f64) -> Self {
        Self {
            completeness: CompletenessChecks {
                actors: v,
                stance: v,
                frames: v,
                arguments: v,
            },
            faithfulness: FaithfulnessChecks {
                quote_alignment: v,
                para_equivalence: v,
            },
            coherence: CoherenceChecks {
                links_preserved: v,
                schema_wellformed: v,
            },
            climate_relevance: RelevanceChecks {
                on_topic: v,
                peripheral_excluded: v,
            },
        }
    }

    pub fn checks(&self, d: Dimension) -> Vec<f64> {
        match d {
            Dimension::Completeness => {
                let c = &self.completeness;
                vec![c.actors, c.stance, c.frames, c.arguments]
            }
            Dimension::Faithfulness => vec![self.faithfulness.quote_alignment, self.faithfulness.para_equivalence],
            Dimension::Coherence => vec![self.coherence.links_preserved, self.coherence.schema_wellformed],
            Dimension::ClimateRelevance => vec![
                self.climate_relevance.on_topic,
                self.climate_relevance.peripheral_excluded,
            ],
        }
    }

    /// Each dimension is the mean of its sub-checks.
    pub fn dimension_scores(&self) -> DimensionScores {
        DimensionScores::from_fn(|d| mean(&self.checks(d)))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub completeness: f64,
    pub faithfulness: f64,
    pub coherence: f64,
    pub climate_relevance: f64,
}

impl DimensionScores {
    pub fn from_fn(mut f: impl FnMut(Dimension) -> f64) -> Self {
        Self {
            completeness: f(Dimension::Completeness),
            faithfulness: f(Dimension::Faithfulness),
            coherence: f(Dimension::Coherence),
            climate_relevance: f(Dimension::ClimateRelevance),
        }
    }

    pub fn get(&self, d: Dimension) -> f64 {
        match d {
            Dimension::Completeness => self.completeness,
            Dimension::Faithfulness => self.faithfulness,
            Dimension::Coherence => self.coherence,
            Dimension::ClimateRelevance => self.climate_relevance,
        }
    }

    fn mean_of<'a>(items: impl Iterator<Item = &'a DimensionScores> + Clone) -> Self {
        let n = items.clone().count() as f64;
        Self::from_fn(|d| items.clone().map(|s| s.get(d)).sum::<f64>() / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExtraction {
    pub sub_checks: SubCheckScores,
    pub dimension_scores: DimensionScores,
}

impl From<SubCheckScores> for ScoredExtraction {
    fn from(sub_checks: SubCheckScores) -> Self {
        Self {
            dimension_scores: sub_checks.dimension_scores(),
            sub_checks,
        }
    }
}

/// One judge's scores keyed by extraction (article) id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScorecard {
    pub judge_id: String,
    pub items: BTreeMap<String, ScoredExtraction>,
}

impl JudgeScorecard {
    pub fn new(judge_id: impl Into<String>) -> Self {
        Self {
            judge_id: judge_id.into(),
            items: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, extraction_id: impl Into<String>, scores: SubCheckScores) {
        self.items.insert(extraction_id.into(), scores.into());
    }

    /// Dimension means over the scored extractions.
    pub fn means(&self) -> Option<DimensionScores> {
        (!self.items.is_empty()).then(|| DimensionScores::mean_of(self.items.values().map(|s| &s.dimension_scores)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub judge_id: String,
    pub means: DimensionScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvfReport {
    /// In the order the scorecards were given.
    pub judges: Vec<JudgeSummary>,
    /// Unweighted mean of the judges' means.
    pub aggregate: DimensionScores,
    pub sample_size: usize,
    /// Cross-judge mean per extraction; empty when the report was built from
    /// judge means alone.
    #[serde(default)]
    pub per_extraction: BTreeMap<String, DimensionScores>,
}

impl DvfReport {
    /// A report from already-averaged judge means.
    pub fn from_judge_means(judges: Vec<JudgeSummary>, sample_size: usize) -> Result<Self, DvfError> {
        if judges.is_empty() {
            return Err(DvfError::NoJudges);
        }
        let aggregate = DimensionScores::mean_of(judges.iter().map(|j| &j.means));
        Ok(Self {
            judges,
            aggregate,
            sample_size,
            per_extraction: BTreeMap::new(),
        })
    }
}

/// Per-judge dimension means and their unweighted cross-judge mean. Every
/// judge must have scored the same extractions.
pub fn aggregate(scorecards: &[JudgeScorecard]) -> Result<DvfReport, DvfError> {
    let first = scorecards.first().ok_or(DvfError::NoJudges)?;
    let ids: BTreeSet<&String> = first.items.keys().collect();
    if ids.is_empty() {
        return Err(DvfError::EmptyScorecards);
    }
    let mut seen = BTreeSet::new();
    for card in scorecards {
        if !seen.insert(card.judge_id.as_str()) {
            return Err(DvfError::DuplicateJudge(card.judge_id.clone()));
        }
        let theirs: BTreeSet<&String> = card.items.keys().collect();
        if theirs != ids {
            return Err(DvfError::MismatchedExtractions {
                judge_id: card.judge_id.clone(),
                missing: ids.difference(&theirs).map(|s| s.to_string()).collect(),
                extra: theirs.difference(&ids).map(|s| s.to_string()).collect(),
            });
        }
    }
    let judges = scorecards
        .iter()
        .map(|c| JudgeSummary {
            judge_id: c.judge_id.clone(),
            means: c.means().expect("non-empty, checked above"),
        })
        .collect();
    let per_extraction = ids
        .iter()
        .map(|id| {
            let s = DimensionScores::mean_of(scorecards.iter().map(|c| &c.items[*id].dimension_scores));
            ((*id).clone(), s)
        })
        .collect();
    let mut report = DvfReport::from_judge_means(judges, ids.len())?;
    report.per_extraction = per_extraction;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAnchorItem {
    pub extraction_id: String,
    pub scores: DimensionScores,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HumanAnchorSet {
    pub items: Vec<HumanAnchorItem>,
    /// Coder agreement statistics, e.g. `{"faithfulness_kappa": 0.78}`.
    #[serde(default)]
    pub coder_agreement: BTreeMap<String, f64>,
}

impl HumanAnchorSet {
    /// One [`HumanAnchorItem`] per line.
    pub fn load_jsonl(path: &Path) -> Result<Self, DvfError> {
        let items: Vec<HumanAnchorItem> = read_jsonl(path)?;
        let set = Self {
            items,
            coder_agreement: BTreeMap::new(),
        };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<(), DvfError> {
        for it in &self.items {
            for d in Dimension::ALL {
                let v = it.scores.get(d);
                if !(0.0..=1.0).contains(&v) {
                    return Err(DvfError::AnchorRange {
                        id: it.extraction_id.clone(),
                        dimension: d,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn means(&self) -> Option<DimensionScores> {
        (!self.items.is_empty()).then(|| DimensionScores::mean_of(self.items.iter().map(|i| &i.scores)))
    }
}

pub const DEFAULT_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub dimension: Dimension,
    pub human: f64,
    pub automated: f64,
    pub deviation: f64,
    pub flagged: bool,
}

/// `|automated − human|` per dimension, flagged above `tolerance`. When the
/// report carries per-extraction scores the automated side is averaged over
/// the anchor's extractions only.
pub fn validate_against_human(
    report: &DvfReport,
    anchor: &HumanAnchorSet,
    tolerance: f64,
) -> Result<Vec<Deviation>, DvfError> {
    let human = anchor.means().ok_or(DvfError::EmptyAnchor)?;
    anchor.check()?;
    let automated = if report.per_extraction.is_empty() {
        report.aggregate
    } else {
        let missing: Vec<String> = anchor
            .items
            .iter()
            .filter(|i| !report.per_extraction.contains_key(&i.extraction_id))
            .map(|i| i.extraction_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(DvfError::AnchorNotCovered(missing));
        }
        DimensionScores::mean_of(anchor.items.iter().map(|i| &report.per_extraction[&i.extraction_id]))
    };
    Ok(Dimension::ALL
        .iter()
        .map(|&d| {
            let (h, a) = (human.get(d), automated.get(d));
            let deviation = (a - h).abs();
            Deviation {
                dimension: d,
                human: h,
                automated: a,
                deviation,
                // slack for decimal inputs such as 0.873 − 0.843
                flagged: deviation > tolerance + 1e-12,
            }
        })
        .collect())
}

fn judge_schema() -> String {
    let dims: Vec<String> = Dimension::ALL
        .iter()
        .map(|d| {
            let keys: Vec<String> = d.sub_checks().iter().map(|k| format!("\"{k}\": 0.0-1.0")).collect();
            format!(" \"{}\": {{{}}}", d.key(), keys.join(", "))
        })
        .collect();
    format!("{{\n{}\n}}", dims.join(",\n"))
}

fn rubric() -> String {
    let mut out = String::new();
    for d in Dimension::ALL {
        out.push_str(&format!("{}:\n", d.key()));
        for (k, q) in d.sub_checks().iter().zip(d.questions()) {
            out.push_str(&format!("- {k}: {q}\n"));
        }
    }
    out
}

/// The judge prompt for one finished extraction.
pub fn render_judge_prompt(record: &AfaRecord, article: &Article) -> Result<RenderedPrompt, DvfError> {
    if !record.is_complete() {
        return Err(DvfError::IncompleteRecord(record.article_id.clone()));
    }
    let system = "You verify structured extractions of climate discourse from financial news. \
Score each atomic check on a continuous scale in [0,1], where 0 indicates complete failure, 1 indicates full success, \
and intermediate values capture partial correctness. Output must be a valid JSON object (no prose)."
        .to_string();
    let extraction = serde_json::json!({
        "actors": record.actors,
        "frame": record.frame,
        "argument": record.argument,
    });
    let user = format!(
        "Stage: {}\nChecks:\n{}\nSchema:\n{}\n\nExtraction:\n{}\n\n{}",
        Stage::DvfJudge,
        rubric(),
        judge_schema(),
        serde_json::to_string_pretty(&extraction).expect("plain data serializes"),
        article_block(article)
    );
    Ok(RenderedPrompt { system, user })
}

fn err(path: impl Into<String>, kind: SchemaErrorKind) -> SchemaError {
    SchemaError {
        path: path.into(),
        kind,
    }
}

/// Strict parse of a judge response: all ten sub-checks, no extra keys,
/// numbers in `[0, 1]`. Out-of-range values are errors, never clamped.
pub fn parse_judge_scores(response_text: &str) -> Result<SubCheckScores, Vec<SchemaError>> {
    let root: Value = serde_json::from_str(unfence(response_text)).map_err(|e| {
        vec![err(
            "$",
            SchemaErrorKind::MalformedJson {
                message: e.to_string(),
            },
        )]
    })?;
    let Value::Object(root) = root else {
        return Err(vec![err(
            "$",
            SchemaErrorKind::TypeViolation {
                expected: "object".into(),
            },
        )]);
    };
    let mut errors = Vec::new();
    let known: BTreeSet<&str> = Dimension::ALL.iter().map(|d| d.key()).collect();
    for k in root.keys() {
        if !known.contains(k.as_str()) {
            errors.push(err(k.clone(), SchemaErrorKind::UnknownKey));
        }
    }
    let mut values: BTreeMap<(Dimension, &str), f64> = BTreeMap::new();
    for d in Dimension::ALL {
        let obj: &Map<String, Value> = match root.get(d.key()) {
            None | Some(Value::Null) => {
                errors.push(err(d.key(), SchemaErrorKind::MissingKey));
                continue;
            }
            Some(Value::Object(o)) => o,
            Some(_) => {
                errors.push(err(
                    d.key(),
                    SchemaErrorKind::TypeViolation {
                        expected: "object".into(),
                    },
                ));
                continue;
            }
        };
        for k in obj.keys() {
            if !d.sub_checks().contains(&k.as_str()) {
                errors.push(err(format!("{}.{k}", d.key()), SchemaErrorKind::UnknownKey));
            }
        }
        for &k in d.sub_checks() {
            let path = format!("{}.{k}", d.key());
            match obj.get(k) {
                None | Some(Value::Null) => errors.push(err(path, SchemaErrorKind::MissingKey)),
                Some(Value::Number(n)) => {
                    let v = n.as_f64().unwrap_or(f64::NAN);
                    if (0.0..=1.0).contains(&v) {
                        values.insert((d, k), v);
                    } else {
                        errors.push(err(path, SchemaErrorKind::OutOfRange { value: n.to_string() }));
                    }
                }
                Some(_) => errors.push(err(
                    path,
                    SchemaErrorKind::TypeViolation {
                        expected: "number".into(),
                    },
                )),
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let g = |d: Dimension, k: &str| values[&(d, k)];
    use Dimension::*;
    Ok(SubCheckScores {
        completeness: CompletenessChecks {
            actors: g(Completeness, "actors"),
            stance: g(Completeness, "stance"),
            frames: g(Completeness, "frames"),
            arguments: g(Completeness, "arguments"),
        },
        faithfulness: FaithfulnessChecks {
            quote_alignment: g(Faithfulness, "quote_alignment"),
            para_equivalence: g(Faithfulness, "para_equivalence"),
        },
        coherence: CoherenceChecks {
            links_preserved: g(Coherence, "links_preserved"),
            schema_wellformed: g(Coherence, "schema_wellformed"),
        },
        climate_relevance: RelevanceChecks {
            on_topic: g(ClimateRelevance, "on_topic"),
            peripheral_excluded: g(ClimateRelevance, "peripheral_excluded"),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub settings: InferenceSettings,
    /// Corrective retries per (judge, extraction) pair.
    pub max_retries: usize,
    pub backoff: Backoff,
    /// Judge calls in flight (0: thread-pool default).
    pub workers: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            settings: InferenceSettings::for_stage(Stage::DvfJudge),
            max_retries: 3,
            backoff: Backoff::default(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeFailure {
    pub judge_id: String,
    pub article_id: String,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRun {
    /// One per judge, restricted to extractions every judge scored.
    pub scorecards: Vec<JudgeScorecard>,
    pub exchanges: Vec<LlmExchange>,
    pub failures: Vec<JudgeFailure>,
    /// Extractions left out: incomplete records and any pair that failed.
    pub dropped: Vec<String>,
}

fn judge_one(
    judge: &dyn ChatClient,
    record: &AfaRecord,
    article: &Article,
    config: &JudgeConfig,
) -> (Result<SubCheckScores, Vec<String>>, Vec<LlmExchange>) {
    let base = match render_judge_prompt(record, article) {
        Ok(p) => p,
        Err(e) => return (Err(vec![e.to_string()]), Vec::new()),
    };
    let mut exchanges = Vec::new();
    let mut prompt = base.clone();
    for attempt in 0..=config.max_retries {
        let request = ChatRequest {
            article_id: record.article_id.clone(),
            stage: Stage::DvfJudge,
            attempt,
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            settings: config.settings.clone(),
        };
        let text = prompt.text();
        let raw = match call_with_backoff(judge, &request, &config.backoff, &mut exchanges, &text) {
            Ok(r) => r,
            Err(m) => return (Err(vec![m]), exchanges),
        };
        exchanges.push(LlmExchange {
            article_id: record.article_id.clone(),
            stage: Stage::DvfJudge,
            attempt,
            prompt: text,
            raw_response: raw.clone(),
            settings: config.settings.clone(),
            error: None,
        });
        match parse_judge_scores(&raw) {
            Ok(s) => return (Ok(s), exchanges),
            Err(errors) if attempt == config.max_retries => {
                return (Err(errors.iter().map(|e| e.to_string()).collect()), exchanges)
            }
            Err(errors) => prompt = corrective_prompt(&base, &errors, &raw),
        }
    }
    unreachable!("the attempt loop only exits by returning")
}

/// Scores every complete record with every judge, concurrently over
/// (judge, record) pairs. Records that any judge failed to score are
/// dropped from all scorecards so the sets stay aligned.
pub fn run_judges(
    judges: &[&dyn ChatClient],
    records: &[AfaRecord],
    articles: &[Article],
    config: &JudgeConfig,
) -> Result<JudgeRun, DvfError> {
    if judges.is_empty() {
        return Err(DvfError::NoJudges);
    }
    let mut names = BTreeSet::new();
    for j in judges {
        if !names.insert(j.model_name()) {
            return Err(DvfError::DuplicateJudge(j.model_name().to_string()));
        }
    }
    let by_id: BTreeMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut sorted: Vec<&AfaRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    let mut judged = Vec::new();
    for r in sorted {
        if !r.is_complete() {
            dropped.insert(r.article_id.clone());
            continue;
        }
        let a = by_id
            .get(r.article_id.as_str())
            .ok_or_else(|| DvfError::MissingArticle(r.article_id.clone()))?;
        judged.push((r, *a));
    }
    let pairs: Vec<(usize, usize)> = (0..judges.len())
        .flat_map(|j| (0..judged.len()).map(move |r| (j, r)))
        .collect();
    let results = par::map_bounded(&pairs, config.workers, |&(j, r)| {
        judge_one(judges[j], judged[r].0, judged[r].1, config)
    });
    let mut cards: Vec<JudgeScorecard> = judges.iter().map(|j| JudgeScorecard::new(j.model_name())).collect();
    let mut exchanges = Vec::new();
    let mut failures = Vec::new();
    for (&(j, r), (result, ex)) in pairs.iter().zip(results) {
        exchanges.extend(ex);
        let id = &judged[r].0.article_id;
        match result {
            Ok(s) => cards[j].insert(id.clone(), s),
            Err(errors) => {
                dropped.insert(id.clone());
                failures.push(JudgeFailure {
                    judge_id: judges[j].model_name().to_string(),
                    article_id: id.clone(),
                    errors,
                });
            }
        }
    }
    for c in &mut cards {
        c.items.retain(|id, _| !dropped.contains(id));
    }
    Ok(JudgeRun {
        scorecards: cards,
        exchanges,
        failures,
        dropped: dropped.into_iter().collect(),
    })
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Dimensions as rows, judges as columns.
pub fn per_judge_csv(report: &DvfReport) -> String {
    let mut rows = vec![std::iter::once("Dim.".to_string())
        .chain(report.judges.iter().map(|j| j.judge_id.clone()))
        .collect()];
    for d in Dimension::ALL {
        rows.push(
            std::iter::once(d.label().to_string())
                .chain(report.judges.iter().map(|j| format!("{:.3}", j.means.get(d))))
                .collect(),
        );
    }
    csv_string(rows)
}

/// Human score, automated score, deviation and flag per dimension.
pub fn human_comparison_csv(deviations: &[Deviation]) -> String {
    let mut rows = vec![["Dimension", "Human Score", "DVF (avg.)", "Deviation", "Flagged"]
        .map(String::from)
        .to_vec()];
    for d in deviations {
        rows.push(vec![
            d.dimension.label().to_string(),
            format!("{:.3}", d.human),
            format!("{:.3}", d.automated),
            format!("{:.3}", d.deviation),
            d.flagged.to_string(),
        ]);
    }
    csv_string(rows)
}
