use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(ActorType {
    Company => "company",
    FinancialInstitution => "financial_institution",
    Government => "government",
    NgoAdvocacy => "ngo_advocacy",
    Individual => "individual",
});

string_enum!(Stance {
    Supportive => "supportive",
    Opposing => "opposing",
    Neutral => "neutral",
    Mixed => "mixed",
});

string_enum!(Frame {
    EconomicOpportunity => "economic_opportunity",
    EconomicRisk => "economic_risk",
    RegulatoryCompliance => "regulatory_compliance",
    TechnologicalSolution => "technological_solution",
    EnvironmentalUrgency => "environmental_urgency",
    SocialResponsibility => "social_responsibility",
    MarketDynamics => "market_dynamics",
    UncertaintySkepticism => "uncertainty_skepticism",
});

string_enum!(Stage {
    ActorStance => "actor_stance",
    Frame => "frame",
    Argument => "argument",
    DvfJudge => "dvf_judge",
});

impl Frame {
    pub fn definition(self) -> &'static str {
        match self {
            Frame::EconomicOpportunity => {
                "Frames climate change as growth, innovation, and investment potential."
            }
            Frame::EconomicRisk => {
                "Highlights financial losses, stranded assets, and risks to firms or markets."
            }
            Frame::RegulatoryCompliance => {
                "Focuses on laws, policies, and regulatory burdens or incentives."
            }
            Frame::TechnologicalSolution => {
                "Emphasizes innovation, R&D, and technical fixes to climate challenges."
            }
            Frame::EnvironmentalUrgency => {
                "Stresses ecological severity and the need for rapid action."
            }
            Frame::SocialResponsibility => {
                "Invokes ethics, corporate responsibility, and societal expectations."
            }
            Frame::MarketDynamics => {
                "Frames climate in terms of competition, supply-demand, and positioning."
            }
            Frame::UncertaintySkepticism => {
                "Expresses doubt or skepticism about climate science, policies, or impacts."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorExtraction {
    pub name: String,
    pub actor_type: ActorType,
    pub stance: Stance,
    pub quote_text: String,
    pub climate_relevance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAssignment {
    pub primary_frame: Frame,
    pub secondary_frame: Option<Frame>,
    pub justification: String,
    pub climate_connection: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportingArgument {
    pub claim: String,
    pub evidence: Vec<String>,
    pub warrant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentStructure {
    pub claim: String,
    pub evidence: Vec<String>,
    pub warrant: String,
    pub impact: String,
    pub supporting_arguments: Vec<SupportingArgument>,
}

impl ArgumentStructure {
    /// Premises backing the central claim.
    pub fn premise_count(&self) -> usize {
        self.evidence.len() + self.supporting_arguments.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl InferenceSettings {
    pub fn for_stage(stage: Stage) -> Self {
        let max_tokens = match stage {
            Stage::ActorStance | Stage::Frame => 512,
            Stage::Argument => 768,
            Stage::DvfJudge => 256,
        };
        Self {
            temperature: 0.2,
            top_p: 0.9,
            max_tokens,
            stop_sequences: vec!["```".to_string()],
        }
    }
}

/// One request/response round trip with a chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub article_id: String,
    pub stage: Stage,
    /// 0 for the first request, then one per corrective retry.
    pub attempt: usize,
    pub prompt: String,
    pub raw_response: String,
    pub settings: InferenceSettings,
    /// Transport error text when no response arrived.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub actor_stance: InferenceSettings,
    pub frame: InferenceSettings,
    pub argument: InferenceSettings,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            actor_stance: InferenceSettings::for_stage(Stage::ActorStance),
            frame: InferenceSettings::for_stage(Stage::Frame),
            argument: InferenceSettings::for_stage(Stage::Argument),
        }
    }
}

impl StageSettings {
    pub fn get(&self, stage: Stage) -> InferenceSettings {
        match stage {
            Stage::ActorStance => self.actor_stance.clone(),
            Stage::Frame => self.frame.clone(),
            Stage::Argument => self.argument.clone(),
            Stage::DvfJudge => InferenceSettings::for_stage(Stage::DvfJudge),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    pub model_name: String,
    pub settings: StageSettings,
    /// Corrective retries across all stages.
    pub retry_count: usize,
    /// `[actor_stance, frame, argument]`.
    pub retries_by_stage: [usize; 3],
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// An actor whose quote could not be found in the article text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteFlag {
    pub actor_index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    /// Schema errors of the last attempt.
    pub errors: Vec<String>,
    /// Every raw response received for the stage, in order.
    pub raw_responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfaRecord {
    pub article_id: String,
    pub actors: Option<Vec<ActorExtraction>>,
    pub frame: Option<FrameAssignment>,
    pub argument: Option<ArgumentStructure>,
    pub extraction_meta: ExtractionMeta,
    #[serde(default)]
    pub quote_flags: Vec<QuoteFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
}

impl AfaRecord {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.actors.is_some() && self.frame.is_some() && self.argument.is_some()
    }
}
