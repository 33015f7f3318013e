//! The full sampling run: stratify, allocate, cluster, select, diagnose.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    allocate_proportional, cluster_theme, fidelity_report, mmr_select, stratify, AllocationPlan,
    ClusterAssignment, FidelityItem, FidelityReport, KBounds, MmrCandidate, RemainderPolicy,
    SamplerError, Stratum, StratumSpec,
};
use crate::corpus::Article;
use crate::embedding::{compose_representation, EmbeddingStore};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_total: u64,
    pub lambda: f64,
    pub k_bounds: KBounds,
    pub remainder_policy: RemainderPolicy,
    pub headline_weight: f64,
    pub lead_weight: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_total: 100,
            lambda: 0.7,
            k_bounds: KBounds::default(),
            remainder_policy: RemainderPolicy::Floor,
            headline_weight: 2.0,
            lead_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedArticle {
    pub article_id: String,
    pub stratum_label: String,
    pub cluster_index: usize,
    pub mmr_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub selected: Vec<SelectedArticle>,
    pub lambda: f64,
    pub fidelity: FidelityReport,
    pub allocation: AllocationPlan,
    pub clusters: Vec<ClusterAssignment>,
    /// Articles dated outside every stratum.
    pub unassigned: Vec<String>,
    /// Allocation-versus-reported divergences, one line per stratum.
    pub notes: Vec<String>,
}

impl SampleManifest {
    pub fn count_for(&self, stratum: &str) -> u64 {
        self.selected.iter().filter(|s| s.stratum_label == stratum).count() as u64
    }
}

struct StratumOutcome {
    assignment: ClusterAssignment,
    selected: Vec<SelectedArticle>,
}

fn sample_stratum(
    stratum: &Stratum,
    n_t: u64,
    vectors: &BTreeMap<&str, Vec<f64>>,
    config: &SampleConfig,
) -> Result<StratumOutcome, SamplerError> {
    let mut ids = stratum.population_ids.clone();
    ids.sort();
    let vecs: Vec<Vec<f64>> = ids.iter().map(|id| vectors[id.as_str()].clone()).collect();
    let assignment = cluster_theme(&stratum.label, &ids, &vecs, config.k_bounds);
    let mut selected = Vec::new();
    if n_t == 0 {
        return Ok(StratumOutcome {
            assignment,
            selected,
        });
    }
    let sizes: Vec<(String, u64)> = (0..assignment.k)
        .map(|c| (c.to_string(), assignment.members(c).len() as u64))
        .collect();
    let quotas = allocate_proportional(&sizes, n_t, RemainderPolicy::LargestRemainder)?;
    for (cluster, q) in quotas.per_stratum.iter().enumerate() {
        let members: Vec<String> = assignment.members(cluster).into_iter().map(String::from).collect();
        let member_vecs: Vec<Vec<f64>> =
            members.iter().map(|id| vectors[id.as_str()].clone()).collect();
        let candidates = MmrCandidate::from_cluster(&members, &member_vecs);
        for pick in mmr_select(&candidates, q.n as usize, config.lambda)? {
            selected.push(SelectedArticle {
                article_id: pick.id,
                stratum_label: stratum.label.clone(),
                cluster_index: cluster,
                mmr_rank: pick.rank,
            });
        }
    }
    Ok(StratumOutcome {
        assignment,
        selected,
    })
}

/// Runs the four sampling stages. Strata are processed in parallel; the
/// output is ordered by stratum (config order), cluster and MMR rank.
pub fn build_sample(
    articles: &[Article],
    embeddings: &EmbeddingStore,
    specs: &[StratumSpec],
    config: &SampleConfig,
) -> Result<SampleManifest, SamplerError> {
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(SamplerError::BadLambda(config.lambda));
    }
    let (strata, unassigned) = stratify(articles, specs)?;
    let populations: Vec<(String, u64)> = strata
        .iter()
        .map(|s| (s.label.clone(), s.population_ids.len() as u64))
        .collect();
    let allocation = allocate_proportional(&populations, config.n_total, config.remainder_policy)?;
    let reported: BTreeMap<String, u64> = specs
        .iter()
        .filter_map(|s| Some((s.label.clone(), s.reported_sample?)))
        .collect();
    let notes = allocation.divergence_notes(&reported);
    for n in &notes {
        log::info!("{n}");
    }

    let mut vectors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &strata {
        for id in &s.population_ids {
            let rec = embeddings
                .get(id)
                .ok_or_else(|| SamplerError::MissingEmbedding(id.clone()))?;
            vectors.insert(
                id,
                compose_representation(rec, config.headline_weight, config.lead_weight)?,
            );
        }
    }

    let jobs: Vec<(&Stratum, u64)> = strata
        .iter()
        .zip(&allocation.per_stratum)
        .map(|(s, a)| (s, a.n))
        .collect();
    let outcomes = par::map(&jobs, |(s, n)| sample_stratum(s, *n, &vectors, config));
    let mut clusters = Vec::new();
    let mut selected = Vec::new();
    for o in outcomes {
        let o = o?;
        clusters.push(o.assignment);
        selected.extend(o.selected);
    }
    if selected.is_empty() {
        return Err(SamplerError::EmptySample);
    }

    let theme = |a: &ClusterAssignment, id: &str| format!("{}/{}", a.stratum_label, a.assignments[id]);
    let population: Vec<FidelityItem> = strata
        .iter()
        .zip(&clusters)
        .flat_map(|(s, a)| {
            s.population_ids.iter().map(move |id| (s, a, id))
        })
        .map(|(s, a, id)| FidelityItem {
            temporal: s.label.clone(),
            thematic: theme(a, id),
            vector: vectors[id.as_str()].clone(),
        })
        .collect();
    let by_label: BTreeMap<&str, &ClusterAssignment> =
        clusters.iter().map(|c| (c.stratum_label.as_str(), c)).collect();
    let sample: Vec<FidelityItem> = selected
        .iter()
        .map(|s| FidelityItem {
            temporal: s.stratum_label.clone(),
            thematic: theme(by_label[s.stratum_label.as_str()], &s.article_id),
            vector: vectors[s.article_id.as_str()].clone(),
        })
        .collect();
    let fidelity = fidelity_report(&sample, &population)?;

    Ok(SampleManifest {
        selected,
        lambda: config.lambda,
        fidelity,
        allocation,
        clusters,
        unassigned,
        notes,
    })
}
