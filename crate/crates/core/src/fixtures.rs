//! Seeded synthetic data: corpora with planted near-duplicates and themed
//! clusters, multi-annotator labelings with planted consensus, scripted LLM
//! transcripts and categorical series with a planted break.
//!
//! Everything is a pure function of its parameters and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agreement::locate_phrase;
use crate::analytics::{AnalyticsError, CategoricalTimeSeries};
use crate::consensus::{annotation_tokens, AnnotatorLabeling, Span, Task};
use crate::corpus::Article;
use crate::dvf::{DimensionScores, HumanAnchorItem};
use crate::embedding::{l2_normalized, EmbeddingRecord};
use crate::extraction::{extract_article, ExtractionConfig, FixedClock, LlmExchange, Stage, SyntheticClient};
use crate::extraction::{ActorType, Frame, Stance};
use crate::io::{write_jsonl, IoError};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{0}")]
    Invalid(String),
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const ACTORS: &[(ActorType, &[&str])] = &[
    (
        ActorType::Company,
        &["Northwind Power", "Apex Motors", "Delta Oil", "Solaris Holdings", "Meridian Utilities", "Crestline Energy"],
    ),
    (
        ActorType::FinancialInstitution,
        &["Northbridge Capital", "BlackRock", "Greenfield Bank", "Harbor Investors", "Atlas Asset Management", "Summit Securities"],
    ),
    (
        ActorType::Government,
        &["European Commission", "Treasury Department", "Environmental Protection Agency", "Energy Ministry", "Senator Alvarez"],
    ),
    (
        ActorType::NgoAdvocacy,
        &["Greenpeace", "WWF", "Clean Air Coalition", "Ocean Trust Foundation", "Climate Justice Alliance"],
    ),
    (ActorType::Individual, &["Maria Lopez", "John Carter", "Anna Weber", "David Chen", "Priya Nair"]),
];

fn frame_clauses(f: Frame) -> &'static [&'static str] {
    match f {
        Frame::EconomicOpportunity => &[
            "clean energy investment will deliver strong growth",
            "demand for green bonds creates a profit opportunity",
            "solar projects offer attractive returns for investors",
            "the shift to renewables opens a growth opportunity",
        ],
        Frame::EconomicRisk => &[
            "stranded coal assets pose a serious risk to lenders",
            "insurers face mounting losses from carbon exposure",
            "a downgrade looms for firms with fossil fuels exposure",
            "climate liabilities raise the risk for shareholders",
        ],
        Frame::RegulatoryCompliance => &[
            "new disclosure rules will reshape carbon reporting",
            "the carbon tax mandate changes compliance costs",
            "tighter emissions regulation requires new policy responses",
            "the regulation sets binding net zero targets",
        ],
        Frame::TechnologicalSolution => &[
            "battery storage technology will cut grid emissions",
            "carbon capture innovation can decarbonize heavy industry",
            "hydrogen technology offers a path to cleaner transport",
            "wind turbine innovation lowers the cost of power",
        ],
        Frame::EnvironmentalUrgency => &[
            "urgent action is needed as warming accelerates",
            "floods and drought show the climate crisis is here",
            "emissions must fall fast to avoid a warming crisis",
            "the urgent crisis demands deep carbon cuts",
        ],
        Frame::SocialResponsibility => &[
            "companies have a responsibility to their community",
            "ethical investors expect stronger esg commitments",
            "stakeholders demand justice for communities hit by carbon pollution",
            "corporate responsibility now includes climate stakeholders",
        ],
        Frame::MarketDynamics => &[
            "carbon market prices reflect tight supply",
            "competition for solar market share is intensifying",
            "trading in carbon markets hit new volumes",
            "power prices track supply shifts in wind generation",
        ],
        Frame::UncertaintySkepticism => &[
            "the benefits of carbon pricing remain uncertain",
            "many analysts are skeptical the targets are achievable",
            "critics questioned whether the solar subsidy works",
            "the evidence on wind subsidies remains unproven",
        ],
    }
}

fn stance_phrase(s: Stance) -> &'static [&'static str] {
    match s {
        Stance::Supportive => &["and welcomed the plan", "and the group will invest further", "and praised the commitment"],
        Stance::Opposing => &["but opposed the proposal", "but warned the plan was costly", "and rejected the targets"],
        Stance::Neutral => &["in a statement on Tuesday", "during a briefing", "in an interview"],
        Stance::Mixed => &["and welcomed the goal but warned about costs", "and praised the aim but opposed the timeline"],
    }
}

const SUBJECTS: &[&str] = &[
    "Analysts", "Traders", "Regional utilities", "Developers", "Lenders", "Shipping firms", "Grid operators",
    "Farm groups", "Manufacturers", "Local officials", "Pension funds", "Consultants",
];
const VERBS: &[&str] = &[
    "tracked", "reported", "financed", "announced", "reviewed", "counted", "approved", "delayed", "expanded",
    "surveyed", "estimated", "listed",
];
const OBJECTS: &[&str] = &[
    "solar farms", "wind projects", "carbon credits", "coal plants", "storage sites", "green bonds",
    "transmission lines", "biofuels contracts", "efficiency retrofits", "charging stations", "carbon audits",
    "renewables tenders",
];
const PLACES: &[&str] = &[
    "Texas", "Germany", "Brazil", "India", "the North Sea", "Ontario", "Japan", "Kenya", "Chile", "Poland",
    "Vietnam", "Australia",
];
const WARRANTS: &[&str] = &[
    "because financing costs follow policy signals",
    "because investors price long-term carbon exposure",
    "since buyers respond to stable regulation",
    "because cheaper technology changes the business case",
    "since public pressure shapes corporate strategy",
];
const OFFTOPIC: &[&str] = &[
    "Retail sales rose in the holiday quarter", "The chain opened new stores downtown",
    "Shoppers spent more on electronics", "The bakery expanded its delivery service",
    "Quarterly revenue beat analyst forecasts", "The airline added routes to Lisbon",
];
const BOILERPLATE: &str = "Reporting by the climate desk; editing by the markets team.";

/// Ground truth the generator planted in one article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleTruth {
    pub theme: Frame,
    pub secondary: Option<Frame>,
    pub stance: Stance,
    pub actors: Vec<String>,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    /// Distinct on-topic articles before duplicates are added.
    pub articles: usize,
    pub duplicate_groups: usize,
    /// Members per duplicate group, original included.
    pub group_size: usize,
    pub dims: usize,
    /// `(start, end exclusive, weight)` date ranges for timestamps.
    pub periods: Vec<(NaiveDate, NaiveDate, f64)>,
    /// On-topic articles carrying only non-climate subject codes.
    pub uncoded_on_topic: usize,
    /// Off-topic articles with no climate codes or terms.
    pub off_topic: usize,
    /// Raw records that fail ingestion.
    pub malformed: usize,
    pub boilerplate: bool,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            articles: 300,
            duplicate_groups: 10,
            group_size: 3,
            dims: 16,
            periods: vec![
                (ymd(2000, 1, 1), ymd(2008, 1, 1), 0.08),
                (ymd(2008, 1, 1), ymd(2013, 1, 1), 0.3),
                (ymd(2013, 1, 1), ymd(2019, 1, 1), 0.24),
                (ymd(2019, 1, 1), ymd(2024, 1, 1), 0.38),
            ],
            uncoded_on_topic: 6,
            off_topic: 6,
            malformed: 2,
            boilerplate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFixture {
    /// Ingestion input, in generation order.
    pub raws: Vec<Map<String, Value>>,
    /// Truth for every well-formed on-topic article, duplicates included.
    pub truth: BTreeMap<String, ArticleTruth>,
    /// Planted near-duplicate groups, original first.
    pub planted_groups: Vec<Vec<String>>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub dims: usize,
}

/// Frame weights drift with the year: opportunity and technology rise,
/// skepticism and risk fall.
fn theme_weights(year: i32) -> Vec<f64> {
    let t = f64::from((year - 2000).clamp(0, 23)) / 23.0;
    Frame::ALL
        .iter()
        .map(|f| match f {
            Frame::EconomicOpportunity => 1.0 + 2.0 * t,
            Frame::TechnologicalSolution => 0.8 + 1.2 * t,
            Frame::EconomicRisk => 1.6 - 0.8 * t,
            Frame::UncertaintySkepticism => 1.4 - 1.0 * t,
            Frame::RegulatoryCompliance => 1.0,
            Frame::EnvironmentalUrgency => 0.8 + 0.4 * t,
            Frame::SocialResponsibility => 0.5 + 0.5 * t,
            Frame::MarketDynamics => 0.9,
        })
        .collect()
}

fn stance_for(theme: Frame, r: &mut ChaCha8Rng) -> Stance {
    let w: [f64; 4] = match theme {
        Frame::EconomicOpportunity | Frame::TechnologicalSolution => [0.7, 0.05, 0.15, 0.1],
        Frame::UncertaintySkepticism => [0.1, 0.6, 0.2, 0.1],
        Frame::EconomicRisk => [0.2, 0.35, 0.3, 0.15],
        _ => [0.4, 0.2, 0.3, 0.1],
    };
    Stance::ALL[WeightedIndex::new(w).expect("positive weights").sample(r)]
}

fn pick<'a, T: ?Sized>(r: &mut ChaCha8Rng, items: &'a [&'a T]) -> &'a T {
    items[r.gen_range(0..items.len())]
}

fn actor_names(r: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let (_, names) = ACTORS[r.gen_range(0..ACTORS.len())];
        let name = pick(r, names).to_string();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

fn filler(r: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} {} {} in {} {}.",
        pick(r, SUBJECTS),
        pick(r, VERBS),
        r.gen_range(2..900),
        pick(r, OBJECTS),
        ["across", "in", "near", "throughout"][r.gen_range(0..4)],
        pick(r, PLACES),
        r.gen_range(2000..2024)
    )
}

fn sentence_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Generated {
    headline: String,
    lead: String,
    body: String,
    truth: ArticleTruth,
}

fn generate_article(r: &mut ChaCha8Rng, year: i32) -> Generated {
    let theme = Frame::ALL[WeightedIndex::new(theme_weights(year)).expect("positive weights").sample(r)];
    let secondary = r.gen_bool(0.5).then(|| loop {
        let f = Frame::ALL[r.gen_range(0..Frame::ALL.len())];
        if f != theme {
            break f;
        }
    });
    let stance = stance_for(theme, r);
    let n_actors = r.gen_range(1..=3);
    let actors = actor_names(r, n_actors);
    let clauses = frame_clauses(theme);
    let claim_clause = pick(r, clauses);
    let lead = format!("{} said {} {}.", actors[0], claim_clause, pick(r, stance_phrase(stance)));
    let mut sentences = vec![lead.clone()];
    for _ in 0..r.gen_range(3..5) {
        sentences.push(filler(r));
    }
    for a in &actors[1..] {
        sentences.push(format!("{a} said {} {}.", pick(r, clauses), pick(r, stance_phrase(stance))));
    }
    if let Some(sec) = secondary {
        sentences.push(format!("{}.", sentence_case(pick(r, frame_clauses(sec)))));
    }
    sentences.push(format!("{} {}.", sentence_case(pick(r, clauses)), pick(r, WARRANTS)));
    for _ in 0..r.gen_range(2..4) {
        sentences.push(filler(r));
    }
    let (first, rest) = sentences.split_at(sentences.len() / 2);
    let body = format!("{}\n{}", first.join(" "), rest.join(" "));
    let headline = format!(
        "{} {} {} {}",
        actors[0],
        ["weighs", "backs", "eyes", "reviews", "targets"][r.gen_range(0..5)],
        pick(r, OBJECTS),
        ["push", "plan", "outlook", "shift", "deal"][r.gen_range(0..5)]
    );
    Generated {
        headline,
        lead,
        body,
        truth: ArticleTruth {
            theme,
            secondary,
            stance,
            actors,
            claim: claim_clause.to_string(),
        },
    }
}

fn timestamp_in(r: &mut ChaCha8Rng, start: NaiveDate, end: NaiveDate) -> DateTime<Utc> {
    let days = (end - start).num_days().max(1);
    let d = start + Duration::days(r.gen_range(0..days));
    Utc.from_utc_datetime(&d.and_hms_opt(r.gen_range(6..20), r.gen_range(0..60), 0).expect("valid time"))
}

fn raw(id: &str, ts: DateTime<Utc>, headline: &str, lead: &str, body: &str, codes: &[&str], source: &str) -> Map<String, Value> {
    let v = serde_json::json!({
        "id": id,
        "timestamp": ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "headline": headline,
        "lead": lead,
        "body": body,
        "djid_codes": codes,
        "source_id": source,
    });
    match v {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

fn unit_vector(r: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dims).map(|_| r.sample(StandardNormal)).collect();
    l2_normalized(&v).unwrap_or_else(|| {
        let mut e = vec![0.0; dims];
        e[0] = 1.0;
        e
    })
}

fn jitter(r: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    let v: Vec<f64> = base.iter().map(|x| x + scale * r.sample::<f64, _>(StandardNormal)).collect();
    l2_normalized(&v).unwrap_or_else(|| base.to_vec())
}

const CLIMATE_CODES: &[&str] = &["N/ENV", "N/CO2", "N/RNW", "N/COA", "N/NGS"];
const SOURCES: &[&str] = &["wire-a", "wire-b", "wire-c"];
const DUP_PREFIXES: &[&str] = &["UPDATE", "REFILE", "CORRECTED", "UPDATE 2", "RPT"];

/// A themed corpus with planted near-duplicate groups. Duplicates differ
/// from their original by a headline prefix and a later timestamp, which
/// keeps their shingle Jaccard well above 0.9 for articles of this length.
pub fn corpus(params: &CorpusParams, seed: u64) -> CorpusFixture {
    let mut r = rng(seed, 1);
    let mut er = rng(seed, 2);
    let centroids: Vec<Vec<f64>> = (0..Frame::ALL.len()).map(|_| unit_vector(&mut er, params.dims)).collect();
    let period_w: Vec<f64> = params.periods.iter().map(|p| p.2.max(1e-9)).collect();
    let period_idx = WeightedIndex::new(&period_w).ok();
    let width = (params.articles + params.uncoded_on_topic + params.off_topic).max(1).to_string().len().max(4);

    let mut raws = Vec::new();
    let mut truth = BTreeMap::new();
    let mut embeddings = Vec::new();
    let mut planted_groups = Vec::new();
    let embed = |id: &str, base: &[f64], scale: f64, er: &mut ChaCha8Rng| EmbeddingRecord {
        article_id: id.to_string(),
        headline_vec: jitter(er, base, scale),
        lead_vec: jitter(er, base, scale),
    };

    let total = params.articles + params.uncoded_on_topic;
    for i in 0..total {
        let (start, end) = match (&period_idx, params.periods.is_empty()) {
            (Some(w), false) => {
                let p = &params.periods[w.sample(&mut r)];
                (p.0, p.1)
            }
            _ => (ymd(2000, 1, 1), ymd(2024, 1, 1)),
        };
        let ts = timestamp_in(&mut r, start, end);
        let g = generate_article(&mut r, ts.format("%Y").to_string().parse().unwrap_or(2000));
        let id = format!("art-{i:0width$}");
        let source = SOURCES[r.gen_range(0..SOURCES.len())];
        let mut body = g.body.clone();
        if params.boilerplate && source == "wire-b" {
            body.push('\n');
            body.push_str(BOILERPLATE);
        }
        let codes: Vec<&str> = if i < params.articles {
            let n = r.gen_range(1..=2);
            (0..n).map(|_| pick(&mut r, CLIMATE_CODES)).collect()
        } else {
            vec!["N/FIN"]
        };
        raws.push(raw(&id, ts, &g.headline, &g.lead, &body, &codes, source));
        let theme_idx = Frame::ALL.iter().position(|f| *f == g.truth.theme).unwrap_or(0);
        let base = centroids[theme_idx].clone();
        embeddings.push(embed(&id, &base, 0.35, &mut er));

        if i < params.duplicate_groups.min(params.articles) {
            let mut group = vec![id.clone()];
            for k in 1..params.group_size.max(1) {
                let did = format!("{id}-d{k}");
                let headline = format!("{} {}", DUP_PREFIXES[(k - 1) % DUP_PREFIXES.len()], g.headline);
                let dts = ts + Duration::hours(k as i64 * 3);
                raws.push(raw(&did, dts, &headline, &g.lead, &body, &codes, source));
                embeddings.push(embed(&did, &embeddings[embeddings.len() - k].headline_vec.clone(), 0.02, &mut er));
                truth.insert(did.clone(), g.truth.clone());
                group.push(did);
            }
            planted_groups.push(group);
        }
        truth.insert(id, g.truth);
    }
    for j in 0..params.off_topic {
        let id = format!("off-{j:0width$}");
        let ts = timestamp_in(&mut r, ymd(2000, 1, 1), ymd(2024, 1, 1));
        let mut s: Vec<String> = (0..6).map(|_| format!("{} by {} percent.", pick(&mut r, OFFTOPIC), r.gen_range(2..40))).collect();
        s.dedup();
        let body = s.join(" ");
        raws.push(raw(&id, ts, "Retailer posts quarterly update", &s[0], &body, &["N/RTL"], "wire-c"));
        embeddings.push(embed(&id, &unit_vector(&mut er, params.dims), 0.1, &mut er));
    }
    for m in 0..params.malformed {
        let id = format!("bad-{m}");
        let mut rec = raw(&id, Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(), "Broken record", "", "", &["N/ENV"], "wire-a");
        if m % 2 == 0 {
            rec.remove("body");
        } else {
            rec.insert("timestamp".into(), Value::String("not a date".into()));
            rec.insert("body".into(), Value::String("Some carbon text.".into()));
        }
        raws.push(rec);
    }
    CorpusFixture {
        raws,
        truth,
        planted_groups,
        embeddings,
        dims: params.dims,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationParams {
    pub annotators: usize,
    /// Chance an annotator marks a planted span.
    pub span_recall: f64,
    /// Chance a marked span has one boundary moved by a token.
    pub boundary_jitter: f64,
    /// Chance an annotator adds one stray short span.
    pub spurious_rate: f64,
    /// Chance a categorical label equals the planted one.
    pub label_accuracy: f64,
}

impl Default for AnnotationParams {
    fn default() -> Self {
        Self {
            annotators: 5,
            span_recall: 0.85,
            boundary_jitter: 0.1,
            spurious_rate: 0.1,
            label_accuracy: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAnnotation {
    pub article_id: String,
    pub actor_spans: Vec<Span>,
    pub claim_spans: Vec<Span>,
    pub stance: Stance,
    pub primary_frame: Frame,
    pub secondary_frame: Option<Frame>,
}

fn noisy_mask(r: &mut ChaCha8Rng, n: usize, spans: &[Span], p: &AnnotationParams) -> Vec<u8> {
    let mut mask = vec![0u8; n];
    for s in spans {
        if !r.gen_bool(p.span_recall) {
            continue;
        }
        let (mut a, mut b) = (s.start, s.end);
        if r.gen_bool(p.boundary_jitter) {
            match r.gen_range(0..4) {
                0 if a > 0 => a -= 1,
                1 if a < b => a += 1,
                2 if b + 1 < n => b += 1,
                3 if b > a => b -= 1,
                _ => {}
            }
        }
        mask[a..=b].iter_mut().for_each(|m| *m = 1);
    }
    if n > 0 && r.gen_bool(p.spurious_rate) {
        let a = r.gen_range(0..n);
        let b = (a + r.gen_range(0..3)).min(n - 1);
        mask[a..=b].iter_mut().for_each(|m| *m = 1);
    }
    mask
}

fn noisy_label<T: Copy + PartialEq>(r: &mut ChaCha8Rng, truth: T, all: &[T], accuracy: f64) -> T {
    if r.gen_bool(accuracy) || all.len() < 2 {
        return truth;
    }
    loop {
        let x = all[r.gen_range(0..all.len())];
        if x != truth {
            return x;
        }
    }
}

/// Independent noisy labelings of the planted spans and labels. Articles
/// without truth are skipped. Token positions come from
/// [`annotation_tokens`] of the given (normalized) articles.
pub fn annotations(
    articles: &[Article],
    truth: &BTreeMap<String, ArticleTruth>,
    params: &AnnotationParams,
    seed: u64,
) -> (Vec<AnnotatorLabeling>, Vec<PlantedAnnotation>) {
    let mut r = rng(seed, 3);
    let mut labelings = Vec::new();
    let mut planted = Vec::new();
    let mut sorted: Vec<&Article> = articles.iter().filter(|a| truth.contains_key(&a.id)).collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let secondary_labels: Vec<Option<Frame>> = std::iter::once(None).chain(Frame::ALL.iter().copied().map(Some)).collect();
    for a in sorted {
        let t = &truth[&a.id];
        let tokens = annotation_tokens(a);
        let mut actor_spans: Vec<Span> = t.actors.iter().filter_map(|n| locate_phrase(&tokens, n)).collect();
        actor_spans.sort();
        actor_spans.dedup();
        let claim_spans: Vec<Span> = locate_phrase(&tokens, &t.claim).into_iter().collect();
        for k in 0..params.annotators {
            let annotator_id = format!("coder-{:02}", k + 1);
            let mut push = |task: Task, token_mask: Option<Vec<u8>>, label: Option<String>| {
                labelings.push(AnnotatorLabeling {
                    annotator_id: annotator_id.clone(),
                    article_id: a.id.clone(),
                    task,
                    token_mask,
                    label,
                })
            };
            push(Task::ActorSpan, Some(noisy_mask(&mut r, tokens.len(), &actor_spans, params)), None);
            push(Task::ClaimSpan, Some(noisy_mask(&mut r, tokens.len(), &claim_spans, params)), None);
            let stance = noisy_label(&mut r, t.stance, Stance::ALL, params.label_accuracy);
            push(Task::Stance, None, Some(stance.as_str().into()));
            let frame = noisy_label(&mut r, t.theme, Frame::ALL, params.label_accuracy);
            push(Task::PrimaryFrame, None, Some(frame.as_str().into()));
            let sec = noisy_label(&mut r, t.secondary, &secondary_labels, params.label_accuracy);
            push(Task::SecondaryFrame, None, Some(sec.map_or("none", Frame::as_str).into()));
        }
        planted.push(PlantedAnnotation {
            article_id: a.id.clone(),
            actor_spans,
            claim_spans,
            stance: t.stance,
            primary_frame: t.theme,
            secondary_frame: t.secondary,
        });
    }
    (labelings, planted)
}

/// Human reference scores around 0.8 for the given extraction ids.
pub fn human_anchor(ids: &[String], seed: u64) -> Vec<HumanAnchorItem> {
    let mut r = rng(seed, 4);
    let s = |r: &mut ChaCha8Rng| ((0.8 + r.gen_range(-0.15..0.15f64)) * 1000.0).round() / 1000.0;
    ids.iter()
        .map(|id| HumanAnchorItem {
            extraction_id: id.clone(),
            scores: DimensionScores {
                completeness: s(&mut r),
                faithfulness: s(&mut r),
                coherence: s(&mut r),
                climate_relevance: s(&mut r),
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptScenario {
    /// Valid payloads throughout.
    Happy,
    /// One stage per article answers malformed JSON first.
    RetryOnce,
    /// The frame stage always answers with an enum violation.
    AlwaysBad,
}

pub const MALFORMED_RESPONSE: &str = "{\"actors\": [";
pub const ENUM_VIOLATION: &str = r#"{"primary_frame": "Economic Growth", "secondary_frame": null, "justification": "", "climate_connection": ""}"#;

fn exchange(article_id: &str, stage: Stage, attempt: usize, text: &str) -> LlmExchange {
    LlmExchange {
        article_id: article_id.into(),
        stage,
        attempt,
        prompt: String::new(),
        raw_response: text.into(),
        settings: crate::extraction::InferenceSettings::for_stage(stage),
        error: None,
    }
}

/// Scripted extraction transcripts replayable through a transcript client.
/// Valid responses come from the synthetic client.
pub fn transcripts(articles: &[Article], scenario: TranscriptScenario, seed: u64) -> Vec<LlmExchange> {
    let client = SyntheticClient::new("synthetic");
    let clock = FixedClock(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap());
    let config = ExtractionConfig::default();
    let mut r = rng(seed, 5);
    let mut sorted: Vec<&Article> = articles.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for a in sorted {
        let Ok(live) = extract_article(&client, a, &config, &clock) else {
            continue;
        };
        let bad_stage = [Stage::ActorStance, Stage::Frame, Stage::Argument][r.gen_range(0..3)];
        for ex in live.exchanges {
            match scenario {
                TranscriptScenario::Happy => out.push(ex),
                TranscriptScenario::RetryOnce if ex.stage == bad_stage => {
                    out.push(exchange(&a.id, ex.stage, 0, MALFORMED_RESPONSE));
                    out.push(LlmExchange { attempt: 1, ..ex });
                }
                TranscriptScenario::RetryOnce => out.push(ex),
                TranscriptScenario::AlwaysBad if ex.stage == Stage::Frame => {
                    out.push(exchange(&a.id, Stage::Frame, 0, ENUM_VIOLATION));
                }
                TranscriptScenario::AlwaysBad => out.push(ex),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeseriesParams {
    pub periods: usize,
    /// First period of the second regime.
    pub break_at: usize,
    pub draws_per_period: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl Default for TimeseriesParams {
    fn default() -> Self {
        Self {
            periods: 20,
            break_at: 10,
            draws_per_period: 50,
            before: vec![0.6, 0.2, 0.1, 0.1],
            after: vec![0.1, 0.2, 0.2, 0.5],
        }
    }
}

/// Multinomial counts per period, drawn from `before` until `break_at` and
/// from `after` from then on.
pub fn timeseries(params: &TimeseriesParams, seed: u64) -> Result<CategoricalTimeSeries, FixtureError> {
    if params.before.len() != params.after.len() || params.before.is_empty() {
        return Err(FixtureError::Invalid("before and after must have the same non-zero length".into()));
    }
    let before = WeightedIndex::new(&params.before).map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let after = WeightedIndex::new(&params.after).map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let mut r = rng(seed, 6);
    let k = params.before.len();
    let counts = (0..params.periods)
        .map(|t| {
            let dist = if t < params.break_at { &before } else { &after };
            let mut row = vec![0u64; k];
            for _ in 0..params.draws_per_period {
                row[dist.sample(&mut r)] += 1;
            }
            row
        })
        .collect();
    let periods = (0..params.periods).map(|t| format!("t{t:02}")).collect();
    let categories = (0..k).map(|c| format!("c{c}")).collect();
    Ok(CategoricalTimeSeries::new(periods, categories, counts)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    Corpus,
    Annotations,
    Transcripts,
    Timeseries,
}

impl FixtureKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "corpus" => Some(Self::Corpus),
            "annotations" => Some(Self::Annotations),
            "transcripts" => Some(Self::Transcripts),
            "timeseries" => Some(Self::Timeseries),
            _ => None,
        }
    }
}

/// Parameters for [`write_fixture`]; each kind reads its own part.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub corpus: CorpusParams,
    pub annotations: AnnotationParams,
    pub transcript_scenario: Option<TranscriptScenario>,
    pub timeseries: TimeseriesParams,
}

fn well_formed_articles(f: &CorpusFixture) -> Vec<Article> {
    let out = crate::corpus::normalize_corpus(&f.raws, &crate::corpus::IngestConfig::default());
    out.articles
}

/// Writes one fixture kind into `dir` and returns the written paths.
pub fn write_fixture(kind: FixtureKind, params: &FixtureParams, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    match kind {
        FixtureKind::Corpus => {
            let f = corpus(&params.corpus, seed);
            write_jsonl(&out("corpus.jsonl"), &f.raws)?;
            write_embeddings(&out("embeddings.jsonl"), &f)?;
            write_jsonl(&out("planted_duplicates.jsonl"), &f.planted_groups)?;
        }
        FixtureKind::Annotations => {
            let f = corpus(&params.corpus, seed);
            let articles = well_formed_articles(&f);
            let (labelings, planted) = annotations(&articles, &f.truth, &params.annotations, seed);
            write_jsonl(&out("corpus.jsonl"), &f.raws)?;
            write_jsonl(&out("annotations.jsonl"), &labelings)?;
            write_jsonl(&out("planted_consensus.jsonl"), &planted)?;
        }
        FixtureKind::Transcripts => {
            let f = corpus(&params.corpus, seed);
            let articles = well_formed_articles(&f);
            let scenario = params.transcript_scenario.unwrap_or(TranscriptScenario::Happy);
            write_jsonl(&out("corpus.jsonl"), &f.raws)?;
            write_jsonl(&out("transcripts.jsonl"), &transcripts(&articles, scenario, seed))?;
        }
        FixtureKind::Timeseries => {
            let s = timeseries(&params.timeseries, seed)?;
            crate::io::write_json(&out("timeseries.json"), &s)?;
        }
    }
    Ok(written)
}

/// Parameters of the end-to-end bundle written by [`write_bundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleParams {
    pub corpus: CorpusParams,
    pub annotations: AnnotationParams,
    pub n_total: u64,
    pub enrichment_budget: usize,
    /// Sampled articles that receive annotator labelings.
    pub annotated: usize,
    /// Sampled articles with human DVF reference scores.
    pub anchored: usize,
    pub judges: usize,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            corpus: CorpusParams::default(),
            annotations: AnnotationParams::default(),
            n_total: 60,
            enrichment_budget: 10,
            annotated: 30,
            anchored: 20,
            judges: 4,
        }
    }
}

fn bundle_config(params: &BundleParams, seed: u64) -> Value {
    let strata: Vec<Value> = crate::sampler::PUBLISHED_STRATA
        .iter()
        .zip(&params.corpus.periods)
        .map(|((label, _, _), (start, end, _))| serde_json::json!({"label": label, "start_date": start, "end_date": end}))
        .collect();
    let reference: Vec<Value> = crate::sampler::PUBLISHED_STRATA
        .iter()
        .map(|(label, pop, reported)| serde_json::json!({"label": label, "population": pop, "reported_sample": reported}))
        .collect();
    let judges: Vec<Value> = (0..params.judges)
        .map(|j| serde_json::json!({"kind": "synthetic", "model": format!("judge-{}", (b'a' + j as u8) as char)}))
        .collect();
    serde_json::json!({
        "seed": seed,
        "paths": {
            "corpus": "corpus.jsonl",
            "embeddings": "embeddings.jsonl",
            "annotations": "annotations.jsonl",
            "human_anchor": "human_anchor.jsonl",
            "outputs": "out"
        },
        "stratification": strata,
        "sampling": {
            "n_total": params.n_total,
            "lambda": 0.7,
            "remainder_policy": "largest-remainder",
            "reference": {"n_total": 4143, "strata": reference}
        },
        "enrichment": {"enabled": true, "budget": params.enrichment_budget, "scorer": {"kind": "lexical"}, "max_rounds": 3},
        "extraction": {
            "client": {"kind": "synthetic", "model": "synthetic-extractor"},
            "fixed_clock": "2024-01-01T00:00:00Z"
        },
        "consensus": {"span_match": "overlap_f1"},
        "dvf": {"judges": judges}
    })
}

/// A self-contained pipeline input directory: corpus, embeddings,
/// annotations and human anchor scores for sampled articles, and a
/// `config.json` using synthetic clients. The corpus needs four periods,
/// one per stratum.
pub fn write_bundle(params: &BundleParams, seed: u64, dir: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    use crate::pipeline::{ingest_articles, PipelineConfig};
    if params.corpus.periods.len() != crate::sampler::PUBLISHED_STRATA.len() {
        return Err(FixtureError::Invalid(format!(
            "the bundle needs {} corpus periods",
            crate::sampler::PUBLISHED_STRATA.len()
        )));
    }
    let f = corpus(&params.corpus, seed);
    let config_value = bundle_config(params, seed);
    let config = PipelineConfig::from_json_with(&config_value.to_string(), dir, &|_| None)
        .map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let corpus_path = dir.join("corpus.jsonl");
    let emb_path = dir.join("embeddings.jsonl");
    write_jsonl(&corpus_path, &f.raws)?;
    write_embeddings(&emb_path, &f)?;

    let ingested = ingest_articles(&f.raws, &config.ingest, &crate::corpus::Lexicon::builtin())
        .map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let (kept, _) = crate::corpus::dedup(&ingested.articles, &config.dedup.dedup_config(config.seed))
        .map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let store = crate::embedding::EmbeddingStore::load(&emb_path).map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let manifest = crate::sampler::build_sample(&kept, &store, &config.stratification, &config.sampling.sample_config())
        .map_err(|e| FixtureError::Invalid(e.to_string()))?;
    let mut ids: Vec<String> = manifest.selected.iter().map(|s| s.article_id.clone()).collect();
    ids.sort();
    let annotated: Vec<Article> = kept
        .iter()
        .filter(|a| ids[..params.annotated.min(ids.len())].contains(&a.id))
        .cloned()
        .collect();
    let (labelings, _) = annotations(&annotated, &f.truth, &params.annotations, seed);
    let anchor = human_anchor(&ids[..params.anchored.min(ids.len())], seed);

    let annotations_path = dir.join("annotations.jsonl");
    let anchor_path = dir.join("human_anchor.jsonl");
    let config_path = dir.join("config.json");
    write_jsonl(&annotations_path, &labelings)?;
    write_jsonl(&anchor_path, &anchor)?;
    let mut text = serde_json::to_string_pretty(&config_value).expect("config serializes");
    text.push('\n');
    crate::io::write_text(&config_path, &text)?;
    Ok(vec![corpus_path, emb_path, annotations_path, anchor_path, config_path])
}

pub(crate) fn write_embeddings(path: &Path, f: &CorpusFixture) -> Result<(), IoError> {
    let header = crate::embedding::EmbeddingHeader {
        dims: f.dims,
        encoder_name: "fixture-themes".into(),
        count: f.embeddings.len(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    for e in &f.embeddings {
        text.push_str(&serde_json::to_string(e).expect("record serializes"));
        text.push('\n');
    }
    crate::io::write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::exact_jaccard;

    fn small() -> CorpusParams {
        CorpusParams {
            articles: 60,
            duplicate_groups: 4,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = serde_json::to_string(&corpus(&small(), 9)).unwrap();
        let b = serde_json::to_string(&corpus(&small(), 9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, serde_json::to_string(&corpus(&small(), 10)).unwrap());
    }

    #[test]
    fn planted_triples_are_near_duplicates() {
        let f = corpus(&small(), 1);
        let text = |id: &str| {
            let r = f.raws.iter().find(|r| r["id"] == id).unwrap();
            format!("{}\n{}", r["headline"].as_str().unwrap(), r["body"].as_str().unwrap())
        };
        assert_eq!(f.planted_groups.len(), 4);
        for g in &f.planted_groups {
            assert_eq!(g.len(), 3);
            for i in 0..3 {
                for j in i + 1..3 {
                    assert!(exact_jaccard(&text(&g[i]), &text(&g[j]), 5) >= 0.9);
                }
            }
        }
        // unrelated articles share almost no 5-shingles
        let ids: Vec<&str> = f.raws.iter().filter_map(|r| r["id"].as_str()).filter(|i| i.starts_with("art-") && !i.contains("-d")).take(20).collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                assert!(exact_jaccard(&text(ids[i]), &text(ids[j]), 5) < 0.5);
            }
        }
    }

    #[test]
    fn ingestion_sees_planted_rejects_and_boilerplate() {
        let f = corpus(&small(), 2);
        let out = crate::corpus::normalize_corpus(&f.raws, &crate::corpus::IngestConfig::default());
        assert_eq!(out.rejections.len(), 2);
        assert!(out.boilerplate_lines.iter().any(|(s, l)| s == "wire-b" && l == BOILERPLATE));
        assert_eq!(f.embeddings.len(), out.articles.len());
    }

    #[test]
    fn annotations_recover_planted_spans() {
        let f = corpus(&small(), 3);
        let arts = well_formed_articles(&f);
        let (labs, planted) = annotations(&arts, &f.truth, &AnnotationParams::default(), 3);
        assert_eq!(labs.len(), planted.len() * 5 * 5);
        let p = planted.iter().find(|p| !p.actor_spans.is_empty()).unwrap();
        assert!(!p.claim_spans.is_empty());
        let gold = crate::consensus::build_gold(&labs, Default::default()).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for (g, p) in gold.iter().zip(&planted) {
            let spans: Vec<Span> = g.spans[&Task::ActorSpan].iter().map(|s| Span::new(s.start_token, s.end_token)).collect();
            for s in &p.actor_spans {
                total += 1;
                hits += usize::from(spans.contains(s));
            }
        }
        assert!(hits as f64 >= 0.8 * total as f64, "{hits}/{total}");
    }

    #[test]
    fn transcripts_replay() {
        let f = corpus(&CorpusParams { articles: 5, duplicate_groups: 0, ..Default::default() }, 4);
        let arts = well_formed_articles(&f);
        let happy = transcripts(&arts, TranscriptScenario::Happy, 4);
        assert_eq!(happy.len(), arts.len() * 3);
        let retry = transcripts(&arts, TranscriptScenario::RetryOnce, 4);
        assert_eq!(retry.len(), arts.len() * 4);
        let bad = transcripts(&arts, TranscriptScenario::AlwaysBad, 4);
        assert!(bad.iter().any(|e| e.raw_response == ENUM_VIOLATION));
    }

    #[test]
    fn timeseries_break() {
        let s = timeseries(&TimeseriesParams::default(), 7).unwrap();
        assert_eq!(s.len(), 20);
        assert!(s.counts.iter().all(|r| r.iter().sum::<u64>() == 50));
        assert!(s.counts[0][0] > s.counts[19][0]);
    }
}
