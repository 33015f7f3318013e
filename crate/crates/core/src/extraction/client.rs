//! The chat-completion contract and the bundled deterministic clients.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prompt::article_from_prompt;
use super::types::{ActorType, Frame, InferenceSettings, LlmExchange, Stage, Stance};
use crate::io::{read_jsonl, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub article_id: String,
    pub stage: Stage,
    pub attempt: usize,
    pub system: String,
    pub user: String,
    pub settings: InferenceSettings,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    /// Network or server failure; retried with backoff.
    #[error("transport error: {0}")]
    Transport(String),
    /// Rate limited; retried after the given delay or the backoff delay.
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    /// Not worth retrying (bad credentials, missing transcript entry).
    #[error("{0}")]
    Fatal(String),
}

/// A single request/response chat endpoint.
pub trait ChatClient: Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;
}

/// Replays recorded responses keyed by `(article_id, stage, attempt)`. A
/// request for an attempt past the recording gets the last recorded one.
#[derive(Debug, Clone)]
pub struct TranscriptClient {
    model_name: String,
    entries: BTreeMap<(String, Stage, usize), Result<String, String>>,
}

impl TranscriptClient {
    pub fn new(model_name: impl Into<String>, exchanges: impl IntoIterator<Item = LlmExchange>) -> Self {
        let entries = exchanges
            .into_iter()
            .map(|e| {
                let v = match e.error {
                    Some(err) => Err(err),
                    None => Ok(e.raw_response),
                };
                ((e.article_id, e.stage, e.attempt), v)
            })
            .collect();
        Self {
            model_name: model_name.into(),
            entries,
        }
    }

    pub fn load(model_name: impl Into<String>, path: &Path) -> Result<Self, IoError> {
        Ok(Self::new(model_name, read_jsonl::<LlmExchange>(path)?))
    }
}

impl ChatClient for TranscriptClient {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let lo = (request.article_id.clone(), request.stage, 0);
        let hi = (request.article_id.clone(), request.stage, request.attempt);
        match self.entries.range(lo..=hi).next_back() {
            Some((_, Ok(text))) => Ok(text.clone()),
            Some((_, Err(e))) => Err(ChatError::Transport(e.clone())),
            None => Err(ChatError::Fatal(format!(
                "no transcript entry for {} / {}",
                request.article_id, request.stage
            ))),
        }
    }
}

/// FNV-1a, used to derive stable pseudo-random values from text.
pub(crate) fn stable_hash(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Answers every stage from the article text embedded in the prompt with
/// simple lexical heuristics. Outputs always satisfy the stage schemas;
/// judge scores are hash-derived values in `[0.5, 1]`, distinct per model
/// name. Meant for end-to-end runs without a live endpoint.
#[derive(Debug, Clone)]
pub struct SyntheticClient {
    model_name: String,
}

impl SyntheticClient {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
        }
    }
}

struct ParsedArticle {
    lead: String,
    sentences: Vec<String>,
    text: String,
}

fn parse_article(block: &str) -> ParsedArticle {
    let mut lead = String::new();
    let mut body_lines = Vec::new();
    let mut headline = String::new();
    let mut in_body = false;
    for line in block.lines() {
        if in_body {
            body_lines.push(line);
        } else if let Some(h) = line.strip_prefix("headline: ") {
            headline = h.to_string();
        } else if let Some(l) = line.strip_prefix("lead: ") {
            lead = l.to_string();
        } else if line == "body:" {
            in_body = true;
        }
    }
    let mut sentences = Vec::new();
    for line in &body_lines {
        let mut rest = *line;
        while let Some(i) = rest.find(". ") {
            sentences.push(rest[..=i].trim().to_string());
            rest = &rest[i + 2..];
        }
        if !rest.trim().is_empty() {
            sentences.push(rest.trim().to_string());
        }
    }
    let text = format!("{headline}\n{lead}\n{}", body_lines.join("\n"));
    ParsedArticle {
        lead,
        sentences,
        text,
    }
}

fn has_word(s: &str, words: &[&str]) -> bool {
    let lower = s.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .any(|t| words.contains(&t))
}

fn classify_actor(name: &str) -> ActorType {
    let has = |ws: &[&str]| name.split_whitespace().any(|t| ws.contains(&t.trim_end_matches([',', '.'])));
    if has(&["Bank", "Capital", "Fund", "Asset", "Investors", "BlackRock", "Partners", "Securities"]) {
        ActorType::FinancialInstitution
    } else if has(&["Ministry", "Government", "Commission", "Agency", "Department", "Minister", "Senator", "Regulator", "Treasury"]) {
        ActorType::Government
    } else if has(&["Greenpeace", "WWF", "Alliance", "Coalition", "Foundation", "Council", "Campaign", "Institute"]) {
        ActorType::NgoAdvocacy
    } else if has(&["Inc", "Corp", "Ltd", "Co", "Group", "Energy", "Motors", "Oil", "Power", "Utilities", "Holdings"]) {
        ActorType::Company
    } else {
        ActorType::Individual
    }
}

fn classify_stance(sentence: &str) -> Stance {
    let neg = has_word(sentence, &["oppose", "opposed", "against", "criticized", "warned", "doubt", "rejected", "costly"]);
    let pos = has_word(sentence, &["support", "supports", "welcomed", "invest", "committed", "praised", "backs", "opportunity"]);
    match (pos, neg) {
        (true, true) => Stance::Mixed,
        (true, false) => Stance::Supportive,
        (false, true) => Stance::Opposing,
        (false, false) => Stance::Neutral,
    }
}

/// Capitalized words immediately before "said"/"says", if any.
fn speaker(sentence: &str) -> Option<String> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let at = words.iter().position(|w| *w == "said" || *w == "says")?;
    let mut start = at;
    while start > 0 && at - start < 4 {
        let w = words[start - 1];
        if w.chars().next().is_some_and(char::is_uppercase) {
            start -= 1;
        } else {
            break;
        }
    }
    (start < at).then(|| words[start..at].join(" ").trim_end_matches(',').to_string())
}

const FRAME_CUES: [(Frame, &[&str]); 8] = [
    (Frame::EconomicOpportunity, &["growth", "opportunity", "returns", "profit", "investment", "demand"]),
    (Frame::EconomicRisk, &["risk", "losses", "stranded", "exposure", "downgrade", "liabilities"]),
    (Frame::RegulatoryCompliance, &["regulation", "rules", "policy", "disclosure", "mandate", "tax"]),
    (Frame::TechnologicalSolution, &["technology", "innovation", "battery", "hydrogen", "capture", "storage"]),
    (Frame::EnvironmentalUrgency, &["urgent", "emissions", "warming", "crisis", "floods", "drought"]),
    (Frame::SocialResponsibility, &["responsibility", "ethical", "community", "esg", "stakeholders", "justice"]),
    (Frame::MarketDynamics, &["market", "prices", "competition", "supply", "share", "trading"]),
    (Frame::UncertaintySkepticism, &["uncertain", "skeptical", "doubt", "unproven", "questioned", "hoax"]),
];

fn frame_payload(text: &str) -> serde_json::Value {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
    let mut counts: Vec<(usize, usize)> = FRAME_CUES
        .iter()
        .enumerate()
        .map(|(i, (_, cues))| (tokens.iter().filter(|t| cues.contains(t)).count(), i))
        .collect();
    counts.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let primary = if counts[0].0 == 0 { Frame::MarketDynamics } else { FRAME_CUES[counts[0].1].0 };
    let secondary = (counts[1].0 > 0 && counts[0].0 > 0).then(|| FRAME_CUES[counts[1].1].0);
    serde_json::json!({
        "primary_frame": primary,
        "secondary_frame": secondary,
        "justification": format!("Most frequent cues point to {primary}."),
        "climate_connection": "The article discusses climate-related business activity.",
    })
}

fn actor_payload(a: &ParsedArticle) -> serde_json::Value {
    let mut actors = Vec::new();
    let mut seen = Vec::new();
    for s in &a.sentences {
        if let Some(name) = speaker(s) {
            if seen.contains(&name) || actors.len() >= 4 {
                continue;
            }
            seen.push(name.clone());
            actors.push(serde_json::json!({
                "name": name,
                "actor_type": classify_actor(&name),
                "stance": classify_stance(s),
                "quote_text": s,
                "climate_relevance": "Quoted on a climate-related topic.",
            }));
        }
    }
    serde_json::json!({ "actors": actors })
}

fn argument_payload(a: &ParsedArticle) -> serde_json::Value {
    let claim = if a.lead.trim().is_empty() {
        a.sentences.first().cloned().unwrap_or_else(|| "No explicit claim.".into())
    } else {
        a.lead.clone()
    };
    let evidence: Vec<&String> = a
        .sentences
        .iter()
        .filter(|s| **s != claim && s.chars().any(|c| c.is_ascii_digit()))
        .take(3)
        .collect();
    let warrant = a
        .sentences
        .iter()
        .find(|s| has_word(s, &["because", "since", "therefore", "as"]))
        .cloned()
        .unwrap_or_else(|| "The reported facts are presented as support for the claim.".into());
    let supporting: Vec<serde_json::Value> = a
        .sentences
        .iter()
        .filter(|s| has_word(s, &["also", "additionally"]))
        .take(2)
        .map(|s| serde_json::json!({ "claim": s, "evidence": [], "warrant": "" }))
        .collect();
    serde_json::json!({
        "claim": claim,
        "evidence": evidence,
        "warrant": warrant,
        "impact": a.sentences.last().cloned().unwrap_or_default(),
        "supporting_arguments": supporting,
    })
}

fn judge_payload(model: &str, prompt: &str) -> serde_json::Value {
    let s = |key: &str| {
        let h = stable_hash(&[model, key, prompt]);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        ((0.5 + 0.5 * unit) * 1000.0).round() / 1000.0
    };
    serde_json::json!({
        "completeness": {"actors": s("actors"), "stance": s("stance"), "frames": s("frames"), "arguments": s("arguments")},
        "faithfulness": {"quote_alignment": s("quote_alignment"), "para_equivalence": s("para_equivalence")},
        "coherence": {"links_preserved": s("links_preserved"), "schema_wellformed": s("schema_wellformed")},
        "climate_relevance": {"on_topic": s("on_topic"), "peripheral_excluded": s("peripheral_excluded")},
    })
}

impl ChatClient for SyntheticClient {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        if request.stage == Stage::DvfJudge {
            return Ok(judge_payload(&self.model_name, &request.user).to_string());
        }
        let block = article_from_prompt(&request.user)
            .ok_or_else(|| ChatError::Fatal("prompt carries no article block".into()))?;
        let a = parse_article(block);
        let v = match request.stage {
            Stage::ActorStance => actor_payload(&a),
            Stage::Frame => frame_payload(&a.text),
            Stage::Argument => argument_payload(&a),
            Stage::DvfJudge => unreachable!(),
        };
        Ok(v.to_string())
    }
}
