//! Three-stage Actor–Frame–Argument extraction against any chat-completion
//! endpoint, with strict schema validation and corrective retries.

mod client;
mod prompt;
mod run;
mod schema;
mod types;

pub use client::{ChatClient, ChatError, ChatRequest, SyntheticClient, TranscriptClient};
pub(crate) use prompt::article_block;
pub(crate) use run::call_with_backoff;
pub(crate) use schema::unfence;
pub use prompt::{
    article_from_prompt, corrective_prompt, render_prompt, PromptContext, PromptError,
    RenderedPrompt, PREVIOUS_OUTPUT_LIMIT,
};
pub use run::{
    extract_article, extract_batch, unfaithful_quotes, Backoff, Clock, ExtractionConfig,
    ExtractionError, ExtractionOutcome, FixedClock, SystemClock,
};
pub use schema::{validate_payload, SchemaError, SchemaErrorKind, StagePayload};
pub use types::{
    ActorExtraction, ActorType, AfaRecord, ArgumentStructure, ExtractionMeta, Frame,
    FrameAssignment, InferenceSettings, LlmExchange, QuoteFlag, Stage, StageFailure,
    StageSettings, Stance, SupportingArgument,
};
