//! Sample-versus-population diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::embedding::{dot, l2_normalized};
use crate::stats::jsd_counts;

/// One article as seen by the diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityItem {
    /// Temporal category (stratum label).
    pub temporal: String,
    /// Thematic category (e.g. `stratum/cluster`).
    pub thematic: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Base-2 JSD between sample and population stratum proportions.
    pub jsd_temporal: f64,
    /// Base-2 JSD between sample and population cluster proportions.
    pub jsd_thematic: f64,
    pub centroid_cosine: f64,
    /// Mean pairwise cosine distance among sampled items of the same
    /// cluster, averaged over clusters with at least two sampled items.
    pub diversity: f64,
}

fn proportions<'a>(
    items: impl Iterator<Item = &'a str>,
    categories: &BTreeSet<&'a str>,
) -> Vec<f64> {
    let mut counts: BTreeMap<&str, f64> = categories.iter().map(|c| (*c, 0.0)).collect();
    for c in items {
        *counts.entry(c).or_default() += 1.0;
    }
    counts.into_values().collect()
}

fn jsd_over(
    sample: &[FidelityItem],
    population: &[FidelityItem],
    key: fn(&FidelityItem) -> &str,
) -> Result<f64, SamplerError> {
    let categories: BTreeSet<&str> = population.iter().chain(sample).map(key).collect();
    let p = proportions(sample.iter().map(key), &categories);
    let q = proportions(population.iter().map(key), &categories);
    Ok(jsd_counts(&p, &q)?)
}

fn mean_direction(items: &[FidelityItem]) -> Option<Vec<f64>> {
    let dims = items.first()?.vector.len();
    let mut m = vec![0.0; dims];
    for it in items {
        for (a, b) in m.iter_mut().zip(&it.vector) {
            *a += b;
        }
    }
    l2_normalized(&m)
}

pub fn fidelity_report(
    sample: &[FidelityItem],
    population: &[FidelityItem],
) -> Result<FidelityReport, SamplerError> {
    if sample.is_empty() || population.is_empty() {
        return Err(SamplerError::EmptySample);
    }
    let jsd_temporal = jsd_over(sample, population, |i| &i.temporal)?;
    let jsd_thematic = jsd_over(sample, population, |i| &i.thematic)?;
    let centroid_cosine = match (mean_direction(sample), mean_direction(population)) {
        (Some(a), Some(b)) => dot(&a, &b).clamp(-1.0, 1.0),
        _ => 0.0,
    };
    let mut by_cluster: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for it in sample {
        by_cluster.entry(&it.thematic).or_default().push(&it.vector);
    }
    let mut per_cluster = Vec::new();
    for members in by_cluster.values().filter(|m| m.len() >= 2) {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                total += 1.0 - dot(members[i], members[j]);
                pairs += 1;
            }
        }
        per_cluster.push(total / pairs as f64);
    }
    let diversity = if per_cluster.is_empty() {
        0.0
    } else {
        per_cluster.iter().sum::<f64>() / per_cluster.len() as f64
    };
    Ok(FidelityReport {
        jsd_temporal,
        jsd_thematic,
        centroid_cosine,
        diversity,
    })
}
