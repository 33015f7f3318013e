//! Stage bodies: read upstream files, call the library, write outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{ClientFactory, FileDigest, PipelineConfig, PipelineError, PipelineStage, RunLog, ScorerSpec};
use crate::active_learning::{run_enrichment, LexicalScorer, SubprocessScorer, UncertaintyScorer};
use crate::agreement::{evaluate_against_gold, iaa_report, table2_csv};
use crate::analytics::{
    actor_frame_table, actor_share_series, argument_complexity, chi_square_independence, complexity_csv,
    default_sweep, frame_shift_csv, frame_shift_table, pelt_changepoints, penalty_sweep, plot_points,
    quarterly_frame_series, residual_table_csv, series_counts_csv, share_table_csv, standardized_residuals,
    MIN_PERIODS,
};
use crate::consensus::{annotation_tokens, build_gold, import_zooniverse_csv, AnnotatorLabeling, GoldRecord, Task};
use crate::corpus::{
    dedup, default_djid_codes, filter_climate, normalize_corpus, Article, Lexicon, Rejection,
};
use crate::dvf::{
    aggregate, human_comparison_csv, per_judge_csv, run_judges, validate_against_human, HumanAnchorSet,
};
use crate::embedding::EmbeddingStore;
use crate::extraction::{extract_batch, AfaRecord, ChatClient, Clock, ExtractionError, FixedClock, Frame, SystemClock};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, write_text};
use crate::report;
use crate::sampler::{allocate_proportional, build_sample, SampleManifest, StratumSpec};

pub(super) struct StageOutput {
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    out: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn new(config: &'a PipelineConfig) -> Self {
        Self {
            config,
            out: config.outputs_dir(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an external input file as configured.
    fn external(&mut self, configured: &Path) -> Result<PathBuf, PipelineError> {
        let path = self.config.resolve(configured);
        self.inputs.push(FileDigest::of(&path, configured.display().to_string())?);
        Ok(path)
    }

    fn upstream(&mut self, name: &str) -> Result<PathBuf, PipelineError> {
        let path = self.out.join(name);
        self.inputs.push(FileDigest::of(&path, name)?);
        Ok(path)
    }

    fn read_jsonl<T: DeserializeOwned>(&mut self, name: &str) -> Result<Vec<T>, PipelineError> {
        let p = self.upstream(name)?;
        Ok(read_jsonl(&p)?)
    }

    fn read_json<T: DeserializeOwned>(&mut self, name: &str) -> Result<T, PipelineError> {
        let p = self.upstream(name)?;
        Ok(read_json(&p)?)
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<(), PipelineError> {
        write_jsonl(&self.out.join(name), items)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        write_json(&self.out.join(name), value)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), PipelineError> {
        write_text(&self.out.join(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn has(&self, name: &str) -> bool {
        self.out.join(name).exists()
    }

    fn finish(self) -> StageOutput {
        StageOutput {
            inputs: self.inputs,
            outputs: self.outputs,
        }
    }
}

fn data(context: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{context}: {e}"))
}

pub(super) fn annotations_are_csv(config: &PipelineConfig) -> bool {
    config
        .paths
        .annotations
        .as_ref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Config-level requirements a stage has beyond its upstream outputs.
pub(super) fn check_configured(stage: PipelineStage, config: &PipelineConfig) -> Result<(), PipelineError> {
    match stage {
        PipelineStage::Consensus if config.paths.annotations.is_none() => Err(PipelineError::Config(
            "paths.annotations: required by the consensus stage".into(),
        )),
        PipelineStage::Verify if config.dvf.judges.is_empty() => Err(PipelineError::Config(
            "dvf.judges: the verify stage needs at least one judge".into(),
        )),
        _ => Ok(()),
    }
}

pub(super) fn execute(
    stage: PipelineStage,
    config: &PipelineConfig,
    clients: &dyn ClientFactory,
    log: &mut RunLog,
) -> Result<StageOutput, PipelineError> {
    let mut ctx = Ctx::new(config);
    match stage {
        PipelineStage::Ingest => ingest(&mut ctx, log)?,
        PipelineStage::Dedup => dedup_stage(&mut ctx, log)?,
        PipelineStage::Sample => sample(&mut ctx, log)?,
        PipelineStage::Enrich => enrich(&mut ctx, log)?,
        PipelineStage::Extract => extract(&mut ctx, clients, log)?,
        PipelineStage::Consensus => consensus(&mut ctx, log)?,
        PipelineStage::Agree => agree(&mut ctx, log)?,
        PipelineStage::Verify => verify(&mut ctx, clients, log)?,
        PipelineStage::Analyze => analyze(&mut ctx, log)?,
        PipelineStage::All => unreachable!("`all` is expanded before execution"),
    }
    Ok(ctx.finish())
}

/// Label of the stratum containing `t`, if any.
pub fn stratum_of<'s>(t: &DateTime<Utc>, specs: &'s [StratumSpec]) -> Option<&'s str> {
    let day = t.date_naive();
    specs
        .iter()
        .find(|s| s.start_date <= day && day < s.end_date)
        .map(|s| s.label.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub raw_records: usize,
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
    pub boilerplate_lines: Vec<(String, String)>,
    pub kept_by_code: usize,
    /// Kept because the lexicon matched although no allowed code was present.
    pub kept_by_lexicon: Vec<String>,
    /// Lexicon matches left out because `include_lexicon_matches` is off.
    pub flagged_not_kept: Vec<String>,
    pub off_topic: usize,
}

#[derive(Debug, Clone)]
pub struct IngestResult {
    pub articles: Vec<Article>,
    pub report: IngestReport,
}

/// Normalization and climate filtering. The kept articles stay in input
/// order.
pub fn ingest_articles(
    raws: &[Map<String, Value>],
    options: &super::IngestOptions,
    lexicon: &Lexicon,
) -> Result<IngestResult, PipelineError> {
    let normalized = normalize_corpus(raws, &options.ingest_config());
    let codes = options.djid_codes.clone().unwrap_or_else(default_djid_codes);
    let filtered =
        filter_climate(&normalized.articles, &codes, lexicon).map_err(|e| PipelineError::Config(format!("ingest.djid_codes: {e}")))?;
    let flagged: Vec<String> = filtered.flagged_by_lexicon.iter().map(|a| a.id.clone()).collect();
    let mut keep: BTreeSet<&str> = filtered.kept.iter().map(|a| a.id.as_str()).collect();
    if options.include_lexicon_matches {
        keep.extend(flagged.iter().map(String::as_str));
    }
    let articles: Vec<Article> = normalized
        .articles
        .iter()
        .filter(|a| keep.contains(a.id.as_str()))
        .cloned()
        .collect();
    let report = IngestReport {
        raw_records: raws.len(),
        accepted: normalized.articles.len(),
        rejections: normalized.rejections,
        boilerplate_lines: normalized.boilerplate_lines,
        kept_by_code: filtered.kept.len(),
        off_topic: normalized.articles.len() - filtered.kept.len() - flagged.len(),
        kept_by_lexicon: if options.include_lexicon_matches { flagged.clone() } else { Vec::new() },
        flagged_not_kept: if options.include_lexicon_matches { Vec::new() } else { flagged },
    };
    Ok(IngestResult { articles, report })
}

fn ingest(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let corpus = ctx.external(&cfg.paths.corpus)?;
    let raws: Vec<Map<String, Value>> = read_jsonl(&corpus)?;
    let lexicon = match &cfg.paths.lexicon {
        Some(p) => {
            let path = ctx.external(p)?;
            Lexicon::from_json(&crate::io::read_text(&path)?).map_err(|e| data(&path.display().to_string(), e))?
        }
        None => Lexicon::builtin(),
    };
    let result = ingest_articles(&raws, &cfg.ingest, &lexicon)?;
    let r = &result.report;
    log.line(format!(
        "ingest: {} raw, {} accepted, {} rejected, {} kept ({} by code, {} by lexicon), {} off-topic",
        r.raw_records,
        r.accepted,
        r.rejections.len(),
        result.articles.len(),
        r.kept_by_code,
        r.kept_by_lexicon.len(),
        r.off_topic
    ));
    for rej in &r.rejections {
        log.warn(format!("ingest: {rej}"));
    }
    ctx.write_jsonl("articles.jsonl", &result.articles)?;
    ctx.write_json("ingest_report.json", &result.report)
}

fn dedup_stage(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let articles: Vec<Article> = ctx.read_jsonl("articles.jsonl")?;
    let cfg = ctx.config.dedup.dedup_config(ctx.config.seed);
    let (kept, report) = dedup(&articles, &cfg).map_err(|e| PipelineError::Config(format!("dedup: {e}")))?;
    log.line(format!(
        "dedup: {} of {} removed ({:.1}%), {} cluster(s), {} candidate pair(s)",
        report.removed,
        report.total,
        100.0 * report.removed_fraction,
        report.clusters.len(),
        report.candidate_pairs
    ));
    ctx.write_jsonl("deduped.jsonl", &kept)?;
    ctx.write_json("dedup_report.json", &report)
}

fn sample(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let articles: Vec<Article> = ctx.read_jsonl("deduped.jsonl")?;
    let emb_path = ctx.external(&cfg.paths.embeddings)?;
    let store = EmbeddingStore::load(&emb_path).map_err(|e| data(&emb_path.display().to_string(), e))?;
    let manifest = build_sample(&articles, &store, &cfg.stratification, &cfg.sampling.sample_config())
        .map_err(|e| data("sample", e))?;
    for a in &manifest.allocation.per_stratum {
        log.line(format!(
            "sample: stratum {} population {} allocated {} selected {}",
            a.label,
            a.population,
            a.n,
            manifest.count_for(&a.label)
        ));
    }
    if !manifest.unassigned.is_empty() {
        log.warn(format!("sample: {} article(s) outside every stratum", manifest.unassigned.len()));
    }
    for note in &manifest.notes {
        log.line(format!("sample: {note}"));
    }
    if let Some(reference) = &cfg.sampling.reference {
        let pops: Vec<(String, u64)> = reference.strata.iter().map(|s| (s.label.clone(), s.population)).collect();
        let plan = allocate_proportional(&pops, reference.n_total, reference.remainder_policy)
            .map_err(|e| PipelineError::Config(format!("sampling.reference: {e}")))?;
        let reported: BTreeMap<String, u64> =
            reference.strata.iter().map(|s| (s.label.clone(), s.reported_sample)).collect();
        let notes = plan.divergence_notes(&reported);
        log.line(format!(
            "sample: reference allocation at n_total = {}: {}",
            reference.n_total,
            plan.per_stratum.iter().map(|s| format!("{} = {}", s.label, s.n)).collect::<Vec<_>>().join(", ")
        ));
        for note in &notes {
            log.line(format!("sample: reference {note}"));
        }
        ctx.write_json("reference_allocation.json", &json!({"plan": plan, "notes": notes}))?;
    }
    let by_id: BTreeMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let selected: Vec<&Article> = manifest.selected.iter().map(|s| by_id[s.article_id.as_str()]).collect();
    ctx.write_json("sample_manifest.json", &manifest)?;
    ctx.write_jsonl("sample.jsonl", &selected)
}

fn enrich(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let articles: Vec<Article> = ctx.read_jsonl("deduped.jsonl")?;
    let manifest: SampleManifest = ctx.read_json("sample_manifest.json")?;
    let sampled: BTreeSet<&str> = manifest.selected.iter().map(|s| s.article_id.as_str()).collect();
    let mut pool: Vec<&Article> = articles
        .iter()
        .filter(|a| !sampled.contains(a.id.as_str()) && stratum_of(&a.timestamp, &cfg.stratification).is_some())
        .collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let e = &cfg.enrichment;
    let mut added: Vec<String> = Vec::new();
    let report = if e.enabled && e.budget > 0 && !pool.is_empty() {
        let scorer: Box<dyn UncertaintyScorer> = match &e.scorer {
            ScorerSpec::Lexical => Box::new(LexicalScorer::new(pool.iter().map(|a| (a.id.clone(), a.full_text())))),
            ScorerSpec::Subprocess {
                program,
                args,
                num_classes,
            } => Box::new(
                SubprocessScorer::spawn(program, args, *num_classes)
                    .map_err(|e| PipelineError::MissingInputs(format!("enrichment.scorer: {e}")))?,
            ),
        };
        let ids: Vec<String> = pool.iter().map(|a| a.id.clone()).collect();
        let report = run_enrichment(scorer.as_ref(), &ids, &e.enrichment_config(cfg.workers)).map_err(|e| data("enrich", e))?;
        added = report.selected().into_iter().take(e.budget).collect();
        for r in &report.rounds {
            log.line(format!(
                "enrich: round {} scored {} selected {} jsd {}",
                r.round_index,
                r.scored,
                r.selected_ids.len(),
                r.jsd_from_previous.map_or("-".to_string(), |j| format!("{j:.4}"))
            ));
        }
        if let Some(reason) = &report.aborted {
            log.warn(format!("enrich: stopped early: {reason}"));
        }
        Some(report)
    } else {
        log.line("enrich: disabled or nothing to add; extraction set equals the sample");
        None
    };
    let chosen: BTreeSet<&str> = sampled.iter().copied().chain(added.iter().map(String::as_str)).collect();
    let mut set: Vec<&Article> = articles.iter().filter(|a| chosen.contains(a.id.as_str())).collect();
    set.sort_by(|a, b| a.id.cmp(&b.id));
    log.line(format!("enrich: {} sampled + {} added = {} article(s)", sampled.len(), added.len(), set.len()));
    ctx.write_json(
        "enrichment_report.json",
        &json!({
            "enabled": e.enabled,
            "budget": e.budget,
            "pool_size": pool.len(),
            "sampled": sampled.len(),
            "added": added,
            "convergence": report,
        }),
    )?;
    ctx.write_jsonl("extraction_set.jsonl", &set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IncompleteRecord {
    article_id: String,
    stage: String,
    errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FailedArticle {
    article_id: String,
    error: String,
}

fn extract(ctx: &mut Ctx, clients: &dyn ClientFactory, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let articles: Vec<Article> = ctx.read_jsonl("extraction_set.jsonl")?;
    let client = clients.build(&cfg.extraction.client, cfg)?;
    let clock: Box<dyn Clock> = match cfg.extraction.fixed_clock {
        Some(t) => Box::new(FixedClock(t)),
        None => Box::new(SystemClock),
    };
    let ecfg = cfg.extraction.extraction_config();
    let results = extract_batch(client.as_ref(), &articles, &ecfg, clock.as_ref(), cfg.workers);
    let mut records = Vec::new();
    let mut exchanges = Vec::new();
    let mut transport = Vec::new();
    let mut prompt = Vec::new();
    for r in results {
        match r {
            Ok(o) => {
                records.push(o.record);
                exchanges.extend(o.exchanges);
            }
            Err(ExtractionError::Transport {
                article_id,
                stage,
                message,
                exchanges: ex,
            }) => {
                exchanges.extend(ex);
                transport.push(FailedArticle {
                    article_id,
                    error: format!("stage {stage}: {message}"),
                });
            }
            Err(e @ ExtractionError::Prompt { .. }) => {
                let ExtractionError::Prompt { article_id, .. } = &e else { unreachable!() };
                prompt.push(FailedArticle {
                    article_id: article_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let incomplete: Vec<IncompleteRecord> = records
        .iter()
        .filter_map(|r| {
            r.failure.as_ref().map(|f| IncompleteRecord {
                article_id: r.article_id.clone(),
                stage: f.stage.to_string(),
                errors: f.errors.clone(),
            })
        })
        .collect();
    let complete = records.iter().filter(|r| r.is_complete()).count();
    let retries: usize = records.iter().map(|r| r.extraction_meta.retry_count).sum();
    let flags: usize = records.iter().map(|r| r.quote_flags.len()).sum();
    log.line(format!(
        "extract: model {}, {} article(s), {} complete, {} incomplete, {} retries, {} quote flag(s)",
        client.model_name(),
        articles.len(),
        complete,
        incomplete.len(),
        retries,
        flags
    ));
    for f in &incomplete {
        log.warn(format!("extract: {} failed at {}: {}", f.article_id, f.stage, f.errors.join("; ")));
    }
    for f in prompt.iter().chain(&transport) {
        log.warn(format!("extract: {}: {}", f.article_id, f.error));
    }
    ctx.write_jsonl("afa_records.jsonl", &records)?;
    ctx.write_jsonl("extraction_transcripts.jsonl", &exchanges)?;
    ctx.write_json(
        "extraction_report.json",
        &json!({
            "model": client.model_name(),
            "attempted": articles.len(),
            "complete": complete,
            "retries_total": retries,
            "quote_flags_total": flags,
            "incomplete": incomplete,
            "prompt_failures": prompt,
            "transport_failures": transport,
        }),
    )?;
    if let Some(first) = transport.first() {
        return Err(PipelineError::Transport(format!(
            "{} article(s) failed in transport, first {}: {}; partial outputs were written",
            transport.len(),
            first.article_id,
            first.error
        )));
    }
    Ok(())
}

fn load_labelings(ctx: &mut Ctx) -> Result<Vec<AnnotatorLabeling>, PipelineError> {
    let cfg = ctx.config;
    let configured = cfg.paths.annotations.as_ref().expect("checked before execution");
    let path = ctx.external(configured)?;
    if annotations_are_csv(cfg) {
        let articles: Vec<Article> = ctx.read_jsonl("articles.jsonl")?;
        let counts: BTreeMap<String, usize> =
            articles.iter().map(|a| (a.id.clone(), annotation_tokens(a).len())).collect();
        let file = File::open(&path).map_err(|e| data(&path.display().to_string(), e))?;
        import_zooniverse_csv(file, &counts).map_err(|e| data(&path.display().to_string(), e))
    } else {
        Ok(read_jsonl(&path)?)
    }
}

fn consensus(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let mut labelings = load_labelings(ctx)?;
    labelings.sort_by(|a, b| {
        (&a.article_id, a.task, &a.annotator_id).cmp(&(&b.article_id, b.task, &b.annotator_id))
    });
    let gold = build_gold(&labelings, ctx.config.consensus.consensus_config()).map_err(|e| data("consensus", e))?;
    let annotators: BTreeSet<&str> = labelings.iter().map(|l| l.annotator_id.as_str()).collect();
    let mut spans: BTreeMap<Task, usize> = BTreeMap::new();
    let mut ties: BTreeMap<Task, usize> = BTreeMap::new();
    for g in &gold {
        for (t, s) in &g.spans {
            *spans.entry(*t).or_default() += s.len();
        }
        for (t, c) in &g.categorical {
            if c.tie_flag {
                *ties.entry(*t).or_default() += 1;
            }
        }
    }
    log.line(format!(
        "consensus: {} labeling(s) from {} annotator(s), {} article(s), tau {}",
        labelings.len(),
        annotators.len(),
        gold.len(),
        ctx.config.consensus.tau
    ));
    for (t, n) in &ties {
        log.line(format!("consensus: {n} tie(s) in {t}, resolved to the smallest label"));
    }
    ctx.write_jsonl("gold.jsonl", &gold)?;
    ctx.write_jsonl("labelings.jsonl", &labelings)?;
    ctx.write_json(
        "consensus_report.json",
        &json!({
            "labelings": labelings.len(),
            "annotators": annotators,
            "articles": gold.len(),
            "spans_by_task": spans,
            "ties_by_task": ties,
        }),
    )
}

fn agree(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let mode = ctx.config.consensus.span_match;
    let labelings: Vec<AnnotatorLabeling> = ctx.read_jsonl("labelings.jsonl")?;
    let gold: Vec<GoldRecord> = ctx.read_jsonl("gold.jsonl")?;
    let iaa = iaa_report(&labelings, mode).map_err(|e| data("agree", e))?;
    for r in &iaa {
        log.line(format!("agree: {} / {}: {:.3} (n = {})", r.component, r.metric, r.value, r.support));
    }
    ctx.write_text("agreement.csv", &table2_csv(&iaa))?;
    let mut text = report::section("Inter-annotator agreement", &report::agreement_table(&iaa));
    if ctx.has("afa_records.jsonl") && ctx.has("extraction_set.jsonl") {
        let records: Vec<AfaRecord> = ctx.read_jsonl("afa_records.jsonl")?;
        let articles: Vec<Article> = ctx.read_jsonl("extraction_set.jsonl")?;
        let eval = evaluate_against_gold(&records, &gold, &articles, mode);
        if eval.is_empty() {
            text.push('\n');
            text.push_str(&report::no_data_stanza(
                "Extraction vs. consensus gold",
                "no extracted article has a gold record",
            ));
        } else {
            ctx.write_text("system_vs_gold.csv", &table2_csv(&eval))?;
            text.push('\n');
            text.push_str(&report::section("Extraction vs. consensus gold", &report::agreement_table(&eval)));
        }
    } else {
        log.line("agree: no extraction outputs; skipping the comparison with gold");
    }
    ctx.write_text("agreement.txt", &text)
}

fn verify(ctx: &mut Ctx, clients: &dyn ClientFactory, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let records: Vec<AfaRecord> = ctx.read_jsonl("afa_records.jsonl")?;
    let articles: Vec<Article> = ctx.read_jsonl("extraction_set.jsonl")?;
    let judges: Vec<Box<dyn ChatClient>> =
        cfg.dvf.judges.iter().map(|j| clients.build(j, cfg)).collect::<Result<_, _>>()?;
    let refs: Vec<&dyn ChatClient> = judges.iter().map(|j| j.as_ref()).collect();
    let run = run_judges(&refs, &records, &articles, &cfg.dvf.judge_config(cfg.workers)).map_err(|e| data("verify", e))?;
    for f in &run.failures {
        log.warn(format!("verify: judge {} on {}: {}", f.judge_id, f.article_id, f.errors.join("; ")));
    }
    let report = aggregate(&run.scorecards).map_err(|e| data("verify", e))?;
    log.line(format!(
        "verify: {} judge(s), {} extraction(s) scored, {} dropped",
        refs.len(),
        report.sample_size,
        run.dropped.len()
    ));
    ctx.write_jsonl("dvf_scorecards.jsonl", &run.scorecards)?;
    ctx.write_jsonl("judge_transcripts.jsonl", &run.exchanges)?;
    ctx.write_json(
        "dvf_report.json",
        &json!({"report": report, "failures": run.failures, "dropped": run.dropped}),
    )?;
    ctx.write_text("dvf_per_judge.csv", &per_judge_csv(&report))?;
    let mut text = report::section("Decomposed verification", &report::dvf_table(&report));
    if let Some(p) = &cfg.paths.human_anchor {
        let path = ctx.external(p)?;
        let mut anchor = HumanAnchorSet::load_jsonl(&path).map_err(|e| data(&path.display().to_string(), e))?;
        let before = anchor.items.len();
        anchor.items.retain(|i| report.per_extraction.contains_key(&i.extraction_id));
        if anchor.items.len() < before {
            log.warn(format!(
                "verify: {} human anchor item(s) were not scored by the judges and are left out",
                before - anchor.items.len()
            ));
        }
        if anchor.items.is_empty() {
            text.push('\n');
            text.push_str(&report::no_data_stanza("Human comparison", "no anchor item was scored by the judges"));
        } else {
            let devs = validate_against_human(&report, &anchor, cfg.dvf.tolerance).map_err(|e| data("verify", e))?;
            for d in devs.iter().filter(|d| d.flagged) {
                log.line(format!(
                    "verify: {} deviates from the human anchor by {:.3} (> {})",
                    d.dimension.label(),
                    d.deviation,
                    cfg.dvf.tolerance
                ));
            }
            ctx.write_text("dvf_human_comparison.csv", &human_comparison_csv(&devs))?;
            text.push('\n');
            text.push_str(&report::section(
                &format!("Human comparison (n = {})", anchor.items.len()),
                &report::deviation_table(&devs, cfg.dvf.tolerance),
            ));
        }
    }
    ctx.write_text("dvf.txt", &text)
}

fn window_counts(records: &[AfaRecord], ts: &BTreeMap<String, DateTime<Utc>>, start: NaiveDate, end: NaiveDate) -> Vec<u64> {
    let mut counts = vec![0u64; Frame::ALL.len()];
    for r in records {
        let (Some(f), Some(t)) = (&r.frame, ts.get(&r.article_id)) else { continue };
        let day = t.date_naive();
        if start <= day && day < end {
            counts[Frame::ALL.iter().position(|x| *x == f.primary_frame).expect("frame in ALL")] += 1;
        }
    }
    counts
}

fn analyze(ctx: &mut Ctx, log: &mut RunLog) -> Result<(), PipelineError> {
    let cfg = ctx.config;
    let a = &cfg.analytics;
    let all: Vec<AfaRecord> = ctx.read_jsonl("afa_records.jsonl")?;
    let articles: Vec<Article> = ctx.read_jsonl("extraction_set.jsonl")?;
    let records: Vec<AfaRecord> = all.into_iter().filter(AfaRecord::is_complete).collect();
    const T_ACTOR_FRAME: &str = "Actor by frame (adjusted residuals)";
    const T_SHARES: &str = "Actor shares by period (%)";
    const T_SHIFT: &str = "Frame shift";
    if records.is_empty() {
        log.warn("analyze: no complete extraction records; the report has no data");
        let text = [T_ACTOR_FRAME, T_SHARES, T_SHIFT]
            .iter()
            .map(|t| report::no_data_stanza(t, "no complete extraction records"))
            .collect::<Vec<_>>()
            .join("\n");
        return ctx.write_text("analysis.txt", &text);
    }
    let timestamps: BTreeMap<String, DateTime<Utc>> = articles.iter().map(|x| (x.id.clone(), x.timestamp)).collect();
    let mut sections = Vec::new();

    let table = actor_frame_table(&records).trimmed();
    let chi = chi_square_independence(&table.counts);
    let residuals = standardized_residuals(&table.counts, a.correction);
    match (chi, residuals) {
        (Ok(chi), Ok(res)) => {
            log.line(format!("analyze: actor x frame chi2({}) = {:.3}, p = {:.3e}", chi.dof, chi.statistic, chi.p_value));
            ctx.write_text("actor_frame_residuals.csv", &residual_table_csv(&table, &res))?;
            ctx.write_json("chi_square.json", &json!({"table": table, "chi_square": chi, "residuals": res}))?;
            sections.push(report::section(T_ACTOR_FRAME, &report::residual_table(&table, &res, &chi)));
        }
        (Err(e), _) | (_, Err(e)) => {
            log.warn(format!("analyze: actor x frame table not testable: {e}"));
            sections.push(report::no_data_stanza(T_ACTOR_FRAME, &e.to_string()));
        }
    }

    let labels: Vec<String> = cfg.stratification.iter().map(|s| s.label.clone()).collect();
    let assignment: BTreeMap<String, String> = timestamps
        .iter()
        .filter_map(|(id, t)| stratum_of(t, &cfg.stratification).map(|s| (id.clone(), s.to_string())))
        .collect();
    let shares = actor_share_series(&records, &assignment, &labels);
    ctx.write_text("actor_shares.csv", &share_table_csv(&shares))?;
    sections.push(report::section(T_SHARES, &report::share_table(&shares)));

    let first = &cfg.stratification[0];
    let last = &cfg.stratification[cfg.stratification.len() - 1];
    let (early, late) = (
        a.early.clone().unwrap_or(super::Window {
            label: first.label.clone(),
            start: first.start_date,
            end: first.end_date,
        }),
        a.late.clone().unwrap_or(super::Window {
            label: last.label.clone(),
            start: last.start_date,
            end: last.end_date,
        }),
    );
    let frames: Vec<String> = Frame::ALL.iter().map(|f| f.as_str().to_string()).collect();
    let e_counts = window_counts(&records, &timestamps, early.start, early.end);
    let l_counts = window_counts(&records, &timestamps, late.start, late.end);
    match frame_shift_table(&frames, &e_counts, &l_counts, a.correction) {
        Ok(rows) => {
            ctx.write_text("frame_shift.csv", &frame_shift_csv(&rows, &early.label, &late.label))?;
            sections.push(report::section(
                &format!("{T_SHIFT}: {} vs {}", early.label, late.label),
                &report::frame_shift_text(&rows, &early.label, &late.label),
            ));
        }
        Err(e) => {
            log.warn(format!("analyze: frame shift not computable: {e}"));
            sections.push(report::no_data_stanza(T_SHIFT, &e.to_string()));
        }
    }

    let (stats, omitted) = argument_complexity(&records, a.group_by);
    ctx.write_text("complexity.csv", &complexity_csv(&stats))?;
    if !omitted.is_empty() {
        log.line(format!("analyze: complexity groups without records: {}", omitted.join(", ")));
    }
    sections.push(report::section("Argument complexity (premises per claim)", &report::complexity_table(&stats)));

    let (series, skipped) = quarterly_frame_series(&records, &timestamps);
    ctx.write_text("quarterly_frames.csv", &series_counts_csv(&series))?;
    if !skipped.is_empty() {
        log.line(format!("analyze: {} quarter(s) without framed records skipped", skipped.len()));
    }
    const T_BREAKS: &str = "Frame-distribution changepoints";
    if series.len() >= MIN_PERIODS {
        let result = pelt_changepoints(&series, a.penalty).map_err(|e| data("analyze", e))?;
        let sweep = penalty_sweep(&series, &default_sweep(&series, a.sweep_points)).map_err(|e| data("analyze", e))?;
        log.line(format!(
            "analyze: {} changepoint(s) over {} quarters at penalty {:.3}",
            result.changepoints.len(),
            series.len(),
            result.penalty
        ));
        ctx.write_json("changepoints.json", &json!({"result": result, "skipped_quarters": skipped}))?;
        let sweep_csv: String = std::iter::once("penalty,breaks,changepoints\n".to_string())
            .chain(sweep.iter().map(|p| {
                let at: Vec<String> = p.changepoints.iter().map(|c| series.periods[*c].clone()).collect();
                format!("{:.6},{},{}\n", p.penalty, p.changepoints.len(), at.join(" "))
            }))
            .collect();
        ctx.write_text("penalty_sweep.csv", &sweep_csv)?;
        sections.push(report::section(T_BREAKS, &report::changepoint_text(&result, &sweep)));
    } else {
        sections.push(report::no_data_stanza(
            T_BREAKS,
            &format!("{} quarter(s) with framed records, need at least {MIN_PERIODS}", series.len()),
        ));
    }
    ctx.write_json(
        "plot_data.json",
        &json!({"frames_by_quarter": plot_points(&series), "actor_shares": plot_points(&shares.series)}),
    )?;
    ctx.write_text("analysis.txt", &sections.join("\n"))
}
