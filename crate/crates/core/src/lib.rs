//! Actor–frame–argument analysis of climate news corpora.
//!
//! The crate covers the whole pipeline: corpus ingestion and
//! near-duplicate removal ([`corpus`]), embedding composition
//! ([`embedding`]), hierarchical sampling ([`sampler`]) with uncertainty
//! enrichment ([`active_learning`]), schema-enforced LLM extraction
//! ([`extraction`]), multi-annotator consensus and agreement
//! ([`consensus`], [`agreement`]), decomposed verification ([`dvf`]) and
//! longitudinal statistics ([`analytics`]). [`pipeline`] wires the stages
//! together behind one declarative config.

pub mod active_learning;
pub mod agreement;
pub mod analytics;
pub mod consensus;
pub mod corpus;
pub mod dvf;
pub mod io;
pub mod pipeline;
pub mod report;
mod par;
pub mod embedding;
pub mod extraction;
pub mod fixtures;
pub mod sampler;
pub mod stats;
pub mod text;
