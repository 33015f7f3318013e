//! Four-stage hierarchical sampling: temporal stratification with
//! proportional allocation, Ward clustering with silhouette-selected `k`,
//! MMR representative selection and fidelity diagnostics.

mod fidelity;
mod mmr;
mod sample;
mod strata;
mod ward;

pub use fidelity::{fidelity_report, FidelityItem, FidelityReport};
pub use mmr::{mmr_select, MmrCandidate, MmrPick};
pub use sample::{build_sample, SampleConfig, SampleManifest, SelectedArticle};
pub use strata::{
    allocate_proportional, stratify, validate_strata, AllocationPlan, RemainderPolicy, Stratum,
    StratumAllocation, StratumSpec, PUBLISHED_STRATA,
};
pub use ward::{
    cluster_theme, silhouette, ward_linkage, ClusterAssignment, Dendrogram, FallbackReason, KBounds,
    Merge,
};

use crate::embedding::EmbeddingError;
use crate::stats::DistributionError;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("n_total must be at least 1")]
    ZeroTotal,
    #[error("n_total = {n_total} exceeds the total population {population}")]
    TotalExceedsPopulation { n_total: u64, population: u64 },
    #[error("stratum `{0}` has an empty population")]
    EmptyStratum(String),
    #[error("no strata configured")]
    NoStrata,
    #[error("stratum `{label}`: {message}")]
    BadStratum { label: String, message: String },
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("quota {quota} exceeds {available} candidates")]
    QuotaTooLarge { quota: usize, available: usize },
    #[error("empty candidate set with quota {0}")]
    NoCandidates(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("article `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}
