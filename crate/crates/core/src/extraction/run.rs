//! Sequential three-stage extraction with schema retries and transport
//! backoff.

use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::client::{ChatClient, ChatError, ChatRequest};
use super::prompt::{corrective_prompt, render_prompt, PromptContext, PromptError};
use super::schema::{validate_payload, StagePayload};
use super::types::{
    AfaRecord, ExtractionMeta, LlmExchange, QuoteFlag, Stage, StageFailure, StageSettings,
};
use crate::corpus::Article;
use crate::par;
use crate::text::collapse_whitespace;

pub trait Clock: Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always reports the same instant, for reproducible records.
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backoff {
    pub initial_ms: u64,
    pub factor: f64,
    pub max_ms: u64,
    /// Transport retries per request before giving up.
    pub max_transport_retries: usize,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial_ms: 500,
            factor: 2.0,
            max_ms: 30_000,
            max_transport_retries: 4,
        }
    }
}

impl Backoff {
    /// Delay before transport retry `n` (0-based).
    pub fn delay_ms(&self, n: usize) -> u64 {
        let d = self.initial_ms as f64 * self.factor.powi(n as i32);
        d.min(self.max_ms as f64) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub settings: StageSettings,
    /// Corrective retries allowed per record, shared by its stages.
    pub max_retries: usize,
    pub backoff: Backoff,
    pub check_faithfulness: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            settings: StageSettings::default(),
            max_retries: 3,
            backoff: Backoff::default(),
            check_faithfulness: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("article `{article_id}`: {source}")]
    Prompt {
        article_id: String,
        source: PromptError,
    },
    #[error("article `{article_id}`, stage {stage}: {message}")]
    Transport {
        article_id: String,
        stage: Stage,
        message: String,
        exchanges: Vec<LlmExchange>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub record: AfaRecord,
    pub exchanges: Vec<LlmExchange>,
}

/// Indices of actors whose quote does not occur in the article text after
/// whitespace normalization.
pub fn unfaithful_quotes(article: &Article, actors: &[super::types::ActorExtraction]) -> Vec<QuoteFlag> {
    let text = collapse_whitespace(&article.full_text());
    actors
        .iter()
        .enumerate()
        .filter(|(_, a)| !text.contains(&collapse_whitespace(&a.quote_text)))
        .map(|(actor_index, a)| QuoteFlag {
            actor_index,
            name: a.name.clone(),
        })
        .collect()
}

pub(crate) fn call_with_backoff(
    client: &dyn ChatClient,
    request: &ChatRequest,
    backoff: &Backoff,
    exchanges: &mut Vec<LlmExchange>,
    prompt_text: &str,
) -> Result<String, String> {
    let mut tries = 0;
    loop {
        let err = match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) => e,
        };
        exchanges.push(LlmExchange {
            article_id: request.article_id.clone(),
            stage: request.stage,
            attempt: request.attempt,
            prompt: prompt_text.to_string(),
            raw_response: String::new(),
            settings: request.settings.clone(),
            error: Some(err.to_string()),
        });
        let delay = match &err {
            ChatError::Fatal(m) => return Err(m.clone()),
            _ if tries >= backoff.max_transport_retries => {
                return Err(format!("{err} (after {tries} retries)"))
            }
            ChatError::RateLimited {
                retry_after_ms: Some(ms),
            } => *ms,
            _ => backoff.delay_ms(tries),
        };
        log::warn!(
            "{} / {}: {err}; retrying in {delay} ms",
            request.article_id,
            request.stage
        );
        if delay > 0 {
            std::thread::sleep(Duration::from_millis(delay));
        }
        tries += 1;
    }
}

struct Run<'a> {
    client: &'a dyn ChatClient,
    article: &'a Article,
    config: &'a ExtractionConfig,
    exchanges: Vec<LlmExchange>,
    retries_left: usize,
    retries_by_stage: [usize; 3],
}

enum StageResult {
    Done(StagePayload),
    Failed(StageFailure),
}

impl Run<'_> {
    fn stage(&mut self, stage: Stage, ctx: PromptContext<'_>) -> Result<StageResult, ExtractionError> {
        let article_id = self.article.id.clone();
        let base = render_prompt(stage, self.article, ctx).map_err(|source| ExtractionError::Prompt {
            article_id: article_id.clone(),
            source,
        })?;
        let settings = self.config.settings.get(stage);
        let slot = match stage {
            Stage::ActorStance => 0,
            Stage::Frame => 1,
            _ => 2,
        };
        let mut prompt = base.clone();
        let mut raw_responses = Vec::new();
        for attempt in 0.. {
            let request = ChatRequest {
                article_id: article_id.clone(),
                stage,
                attempt,
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                settings: settings.clone(),
            };
            let prompt_text = prompt.text();
            let raw = call_with_backoff(
                self.client,
                &request,
                &self.config.backoff,
                &mut self.exchanges,
                &prompt_text,
            )
            .map_err(|message| ExtractionError::Transport {
                article_id: article_id.clone(),
                stage,
                message,
                exchanges: self.exchanges.clone(),
            })?;
            self.exchanges.push(LlmExchange {
                article_id: article_id.clone(),
                stage,
                attempt,
                prompt: prompt_text,
                raw_response: raw.clone(),
                settings: settings.clone(),
                error: None,
            });
            raw_responses.push(raw.clone());
            match validate_payload(stage, &raw) {
                Ok(p) => return Ok(StageResult::Done(p)),
                Err(errors) => {
                    if self.retries_left == 0 {
                        return Ok(StageResult::Failed(StageFailure {
                            stage,
                            errors: errors.iter().map(|e| e.to_string()).collect(),
                            raw_responses,
                        }));
                    }
                    self.retries_left -= 1;
                    self.retries_by_stage[slot] += 1;
                    prompt = corrective_prompt(&base, &errors, &raw);
                }
            }
        }
        unreachable!("the attempt loop only exits by returning")
    }
}

/// Runs actor/stance, then frame, then argument extraction. A stage whose
/// output still fails validation after the retry budget is spent ends the
/// record with a [`StageFailure`]; quotes missing from the article are
/// flagged, not rejected.
pub fn extract_article(
    client: &dyn ChatClient,
    article: &Article,
    config: &ExtractionConfig,
    clock: &dyn Clock,
) -> Result<ExtractionOutcome, ExtractionError> {
    let started_at = clock.now();
    let mut run = Run {
        client,
        article,
        config,
        exchanges: Vec::new(),
        retries_left: config.max_retries,
        retries_by_stage: [0; 3],
    };
    let mut actors = None;
    let mut frame = None;
    let mut argument = None;
    let mut failure = None;

    match run.stage(Stage::ActorStance, PromptContext::default())? {
        StageResult::Done(StagePayload::Actors(a)) => actors = Some(a),
        StageResult::Failed(f) => failure = Some(f),
        StageResult::Done(_) => unreachable!("stage payload matches stage"),
    }
    if failure.is_none() {
        let ctx = PromptContext {
            actors: actors.as_deref(),
            frame: None,
        };
        match run.stage(Stage::Frame, ctx)? {
            StageResult::Done(StagePayload::Frame(f)) => frame = Some(f),
            StageResult::Failed(f) => failure = Some(f),
            StageResult::Done(_) => unreachable!("stage payload matches stage"),
        }
    }
    if failure.is_none() {
        let ctx = PromptContext {
            actors: actors.as_deref(),
            frame: frame.as_ref(),
        };
        match run.stage(Stage::Argument, ctx)? {
            StageResult::Done(StagePayload::Argument(a)) => argument = Some(a),
            StageResult::Failed(f) => failure = Some(f),
            StageResult::Done(_) => unreachable!("stage payload matches stage"),
        }
    }
    let quote_flags = match (&actors, config.check_faithfulness) {
        (Some(a), true) => unfaithful_quotes(article, a),
        _ => Vec::new(),
    };
    let retries_by_stage = run.retries_by_stage;
    let record = AfaRecord {
        article_id: article.id.clone(),
        actors,
        frame,
        argument,
        extraction_meta: ExtractionMeta {
            model_name: client.model_name().to_string(),
            settings: config.settings.clone(),
            retry_count: retries_by_stage.iter().sum(),
            retries_by_stage,
            started_at,
            finished_at: clock.now(),
        },
        quote_flags,
        failure,
    };
    Ok(ExtractionOutcome {
        record,
        exchanges: run.exchanges,
    })
}

/// Extracts many articles with at most `workers` in flight (0: thread-pool
/// default). Results come back in article-id order.
pub fn extract_batch(
    client: &dyn ChatClient,
    articles: &[Article],
    config: &ExtractionConfig,
    clock: &dyn Clock,
    workers: usize,
) -> Vec<Result<ExtractionOutcome, ExtractionError>> {
    let mut sorted: Vec<&Article> = articles.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    par::map_bounded(&sorted, workers, |a| extract_article(client, a, config, clock))
}
