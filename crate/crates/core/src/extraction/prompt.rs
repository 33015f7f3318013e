//! Prompt rendering for the three extraction stages.

use serde::{Deserialize, Serialize};

use super::schema::SchemaError;
use super::types::{ActorExtraction, ActorType, Frame, FrameAssignment, Stage, Stance};
use crate::corpus::Article;

pub const ARTICLE_OPEN: &str = "<<<ARTICLE";
pub const ARTICLE_CLOSE: &str = "ARTICLE>>>";

/// Longest excerpt of a rejected response echoed back in a corrective retry.
pub const PREVIOUS_OUTPUT_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// System and user messages as one block, as recorded in transcripts.
    pub fn text(&self) -> String {
        format!("[system]\n{}\n[user]\n{}", self.system, self.user)
    }
}

/// Outputs of earlier stages that a later stage conditions on.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptContext<'a> {
    pub actors: Option<&'a [ActorExtraction]>,
    pub frame: Option<&'a FrameAssignment>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("stage {stage} needs the {missing} output as context")]
    MissingContext { stage: Stage, missing: Stage },
    #[error("stage {0} is not an extraction stage")]
    NotExtractionStage(Stage),
}

const PROTOCOL: &str = "\
Output protocol:
- Output must be a valid JSON object (no prose).
- Missing fields: return null or empty list.
- Frames must match exactly with the predefined typologies.";

fn join_enum<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> String {
    all.iter().map(|&x| f(x)).collect::<Vec<_>>().join("|")
}

fn actor_schema() -> String {
    format!(
        "{{\n \"actors\": [{{\n   \"name\": \"string\",\n   \"actor_type\": \"{}\",\n   \"stance\": \"{}\",\n   \"quote_text\": \"string\",\n   \"climate_relevance\": \"string\"\n }}]\n}}",
        join_enum(ActorType::ALL, ActorType::as_str),
        join_enum(Stance::ALL, Stance::as_str),
    )
}

fn frame_schema() -> String {
    "{\n \"primary_frame\": \"frame_enum\",\n \"secondary_frame\": \"frame_enum_or_null\",\n \"justification\": \"string\",\n \"climate_connection\": \"string\"\n}".to_string()
}

fn argument_schema() -> String {
    "{\n \"claim\": \"string\",\n \"evidence\": [\"string\", \"...\"],\n \"warrant\": \"string\",\n \"impact\": \"string\",\n \"supporting_arguments\": [{\n   \"claim\": \"string\",\n   \"evidence\": [\"string\", \"...\"],\n   \"warrant\": \"string\"\n }]\n}".to_string()
}

fn frame_typology() -> String {
    Frame::ALL
        .iter()
        .map(|f| format!("- {}: {}", f.as_str(), f.definition()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn article_block(article: &Article) -> String {
    format!(
        "{ARTICLE_OPEN}\nid: {}\nheadline: {}\nlead: {}\nbody:\n{}\n{ARTICLE_CLOSE}",
        article.id, article.headline, article.lead, article.body
    )
}

fn context_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

pub fn render_prompt(
    stage: Stage,
    article: &Article,
    context: PromptContext<'_>,
) -> Result<RenderedPrompt, PromptError> {
    let system = format!(
        "You extract structured information about climate discourse from financial news.\n{PROTOCOL}"
    );
    let (task, schema, extra) = match stage {
        Stage::ActorStance => (
            "Extract actors, type, stance, supporting quote. quote_text must be copied verbatim from the article.",
            actor_schema(),
            String::new(),
        ),
        Stage::Frame => {
            let actors = context.actors.ok_or(PromptError::MissingContext {
                stage,
                missing: Stage::ActorStance,
            })?;
            (
                "Assign one primary and optional secondary frame.",
                frame_schema(),
                format!(
                    "Frame typology:\n{}\n\nActors extracted in stage 1:\n{}",
                    frame_typology(),
                    context_json(&serde_json::json!({ "actors": actors }))
                ),
            )
        }
        Stage::Argument => {
            let actors = context.actors.ok_or(PromptError::MissingContext {
                stage,
                missing: Stage::ActorStance,
            })?;
            let frame = context.frame.ok_or(PromptError::MissingContext {
                stage,
                missing: Stage::Frame,
            })?;
            (
                "Extract claim, evidence, warrant, impact, and optional supporting arguments.",
                argument_schema(),
                format!(
                    "Actors extracted in stage 1:\n{}\n\nFrame assigned in stage 2:\n{}",
                    context_json(&serde_json::json!({ "actors": actors })),
                    context_json(frame)
                ),
            )
        }
        Stage::DvfJudge => return Err(PromptError::NotExtractionStage(stage)),
    };
    let mut user = format!("Stage: {stage}\nTask: {task}\nSchema:\n{schema}\n");
    if !extra.is_empty() {
        user.push('\n');
        user.push_str(&extra);
        user.push('\n');
    }
    user.push('\n');
    user.push_str(&article_block(article));
    Ok(RenderedPrompt { system, user })
}

fn truncate_chars(s: &str, limit: usize) -> &str {
    match s.char_indices().nth(limit) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// The original prompt plus an instruction naming the schema errors and the
/// start of the rejected output.
pub fn corrective_prompt(base: &RenderedPrompt, errors: &[SchemaError], previous: &str) -> RenderedPrompt {
    let listed: Vec<String> = errors.iter().map(|e| format!("- {e}")).collect();
    let user = format!(
        "{}\n\nYour previous response did not match the schema:\n{}\nPrevious response (truncated):\n{}\nReturn only a corrected JSON object.",
        base.user,
        listed.join("\n"),
        truncate_chars(previous, PREVIOUS_OUTPUT_LIMIT)
    );
    RenderedPrompt {
        system: base.system.clone(),
        user,
    }
}

/// The article block embedded in a rendered prompt.
pub fn article_from_prompt(user: &str) -> Option<&str> {
    let start = user.find(ARTICLE_OPEN)? + ARTICLE_OPEN.len();
    let end = user[start..].find(ARTICLE_CLOSE)? + start;
    Some(user[start..end].trim())
}
