use std::sync::atomic::{AtomicUsize, Ordering};

use afa_core::corpus::Article;
use afa_core::extraction::*;
use chrono::{TimeZone, Utc};

fn article(id: &str) -> Article {
    Article {
        id: id.into(),
        timestamp: Utc.with_ymd_and_hms(2016, 3, 1, 9, 0, 0).unwrap(),
        headline: "Fund raises green bond target".into(),
        lead: "Acme Capital said demand for green bonds will keep growing.".into(),
        body: "Acme Capital said demand for green bonds will keep growing. The fund raised 2 billion dollars in 2015. Regulators also said disclosure rules will tighten.".into(),
        djid_codes: ["N/ENV".to_string()].into_iter().collect(),
        source_id: "wire".into(),
    }
}

const ACTORS: &str = r#"{"actors": [{"name": "Acme Capital", "actor_type": "financial_institution", "stance": "supportive", "quote_text": "demand for green bonds will keep growing", "climate_relevance": "green finance"}]}"#;
const FRAME: &str = r#"{"primary_frame": "economic_opportunity", "secondary_frame": "regulatory_compliance", "justification": "growth", "climate_connection": "green bonds"}"#;
const ARGUMENT: &str = r#"{"claim": "Green bond demand will grow", "evidence": ["raised 2 billion dollars"], "warrant": "past demand predicts future demand", "impact": "more green finance", "supporting_arguments": []}"#;
const BAD_FRAME: &str = r#"{"primary_frame": "Economic Growth"}"#;

fn ex(id: &str, stage: Stage, attempt: usize, text: &str) -> LlmExchange {
    LlmExchange {
        article_id: id.into(),
        stage,
        attempt,
        prompt: String::new(),
        raw_response: text.into(),
        settings: InferenceSettings::for_stage(stage),
        error: None,
    }
}

fn clock() -> FixedClock {
    FixedClock(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
}

fn config() -> ExtractionConfig {
    ExtractionConfig {
        backoff: Backoff {
            initial_ms: 0,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn happy_path_has_no_retries() {
    let client = TranscriptClient::new(
        "mock",
        vec![
            ex("a", Stage::ActorStance, 0, ACTORS),
            ex("a", Stage::Frame, 0, FRAME),
            ex("a", Stage::Argument, 0, ARGUMENT),
        ],
    );
    let out = extract_article(&client, &article("a"), &config(), &clock()).unwrap();
    assert!(out.record.is_complete());
    assert_eq!(out.record.extraction_meta.retry_count, 0);
    assert!(out.record.quote_flags.is_empty());
    assert_eq!(out.exchanges.len(), 3);
    assert_eq!(out.record.frame.unwrap().primary_frame, Frame::EconomicOpportunity);
}

#[test]
fn one_malformed_then_valid() {
    let client = TranscriptClient::new(
        "mock",
        vec![
            ex("a", Stage::ActorStance, 0, ACTORS),
            ex("a", Stage::Frame, 0, "{not json"),
            ex("a", Stage::Frame, 1, FRAME),
            ex("a", Stage::Argument, 0, ARGUMENT),
        ],
    );
    let out = extract_article(&client, &article("a"), &config(), &clock()).unwrap();
    assert!(out.record.is_complete());
    assert_eq!(out.record.extraction_meta.retry_count, 1);
    assert_eq!(out.record.extraction_meta.retries_by_stage, [0, 1, 0]);
    let retry = &out.exchanges[2];
    assert_eq!(retry.attempt, 1);
    assert!(retry.prompt.contains("malformed JSON"));
    assert!(retry.prompt.contains("{not json"));
}

#[test]
fn always_bad_fails_after_three_retries() {
    let client = TranscriptClient::new(
        "mock",
        vec![ex("a", Stage::ActorStance, 0, ACTORS), ex("a", Stage::Frame, 0, BAD_FRAME)],
    );
    let out = extract_article(&client, &article("a"), &config(), &clock()).unwrap();
    let r = &out.record;
    assert!(!r.is_complete());
    assert_eq!(r.extraction_meta.retry_count, 3);
    let f = r.failure.as_ref().unwrap();
    assert_eq!(f.stage, Stage::Frame);
    assert_eq!(f.raw_responses, vec![BAD_FRAME; 4]);
    assert!(f.errors[0].starts_with("primary_frame:"));
    assert!(r.actors.is_some());
    assert!(r.frame.is_none() && r.argument.is_none());
}

#[test]
fn quote_not_in_article_is_flagged() {
    let bad_quote = ACTORS.replace("demand for green bonds will keep growing", "coal is dead");
    let client = TranscriptClient::new(
        "mock",
        vec![
            ex("a", Stage::ActorStance, 0, &bad_quote),
            ex("a", Stage::Frame, 0, FRAME),
            ex("a", Stage::Argument, 0, ARGUMENT),
        ],
    );
    let out = extract_article(&client, &article("a"), &config(), &clock()).unwrap();
    assert!(out.record.is_complete());
    assert_eq!(out.record.quote_flags.len(), 1);
    assert_eq!(out.record.quote_flags[0].name, "Acme Capital");
}

struct Flaky {
    failures: AtomicUsize,
}

impl ChatClient for Flaky {
    fn model_name(&self) -> &str {
        "flaky"
    }
    fn complete(&self, req: &ChatRequest) -> Result<String, ChatError> {
        if self.failures.load(Ordering::SeqCst) > 0 {
            self.failures.fetch_sub(1, Ordering::SeqCst);
            return Err(ChatError::Transport("connection reset".into()));
        }
        Ok(match req.stage {
            Stage::ActorStance => ACTORS,
            Stage::Frame => FRAME,
            _ => ARGUMENT,
        }
        .to_string())
    }
}

#[test]
fn transport_errors_back_off_then_recover_or_fail() {
    let ok = Flaky {
        failures: AtomicUsize::new(2),
    };
    let out = extract_article(&ok, &article("a"), &config(), &clock()).unwrap();
    assert!(out.record.is_complete());
    assert_eq!(out.record.extraction_meta.retry_count, 0);
    assert_eq!(out.exchanges.iter().filter(|e| e.error.is_some()).count(), 2);

    let dead = Flaky {
        failures: AtomicUsize::new(100),
    };
    let err = extract_article(&dead, &article("a"), &config(), &clock()).unwrap_err();
    match err {
        ExtractionError::Transport { stage, exchanges, .. } => {
            assert_eq!(stage, Stage::ActorStance);
            assert_eq!(exchanges.len(), 5);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn backoff_is_exponential_and_capped() {
    let b = Backoff::default();
    assert_eq!(
        (0..8).map(|n| b.delay_ms(n)).collect::<Vec<_>>(),
        [500, 1000, 2000, 4000, 8000, 16000, 30000, 30000]
    );
}

#[test]
fn synthetic_client_runs_deterministically() {
    let client = SyntheticClient::new("synthetic");
    let articles: Vec<Article> = (0..6).map(|i| article(&format!("a{i}"))).collect();
    let run = || {
        extract_batch(&client, &articles, &config(), &clock(), 3)
            .into_iter()
            .map(|r| serde_json::to_string(&r.unwrap()).unwrap())
            .collect::<Vec<_>>()
    };
    let first = run();
    assert_eq!(first, run());
    let out: ExtractionOutcome = serde_json::from_str(&first[0]).unwrap();
    assert!(out.record.is_complete());
    assert!(out.record.quote_flags.is_empty());
    let actors = out.record.actors.unwrap();
    assert_eq!(actors[0].name, "Acme Capital");
    assert_eq!(actors[0].actor_type, ActorType::FinancialInstitution);
}

#[test]
fn transcript_replay_is_byte_identical() {
    let client = SyntheticClient::new("synthetic");
    let a = article("a");
    let live = extract_article(&client, &a, &config(), &clock()).unwrap();
    let replay = TranscriptClient::new("synthetic", live.exchanges.clone());
    let again = extract_article(&replay, &a, &config(), &clock()).unwrap();
    assert_eq!(
        serde_json::to_string(&live).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}
