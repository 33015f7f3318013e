use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::corpus::Article;

/// One entry of the stratification config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub label: String,
    pub start_date: NaiveDate,
    /// Exclusive.
    pub end_date: NaiveDate,
    /// Externally reported sample size for this stratum, if any. Only used
    /// to log how the allocation formula diverges from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_sample: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub population_ids: Vec<String>,
}

/// Published per-stratum corpus sizes and sample sizes for the 2000–2023
/// newswire corpus: `(label, population, reported sample)`.
pub const PUBLISHED_STRATA: [(&str, u64, u64); 4] = [
    ("2000-2007", 5_441, 155),
    ("2008-2012", 320_157, 1_355),
    ("2013-2018", 215_351, 911),
    ("2019-2023", 439_112, 1_722),
];

/// Checks that the specs tile one contiguous date range without overlap.
pub fn validate_strata(specs: &[StratumSpec]) -> Result<(), SamplerError> {
    if specs.is_empty() {
        return Err(SamplerError::NoStrata);
    }
    let mut sorted: Vec<&StratumSpec> = specs.iter().collect();
    sorted.sort_by_key(|s| s.start_date);
    for s in &sorted {
        if s.start_date >= s.end_date {
            return Err(SamplerError::BadStratum {
                label: s.label.clone(),
                message: "start_date must precede end_date".into(),
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].end_date != pair[1].start_date {
            return Err(SamplerError::BadStratum {
                label: pair[1].label.clone(),
                message: format!(
                    "starts {} but previous stratum `{}` ends {}",
                    pair[1].start_date, pair[0].label, pair[0].end_date
                ),
            });
        }
    }
    let mut labels: Vec<&str> = specs.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(SamplerError::BadStratum {
            label: w[0].to_string(),
            message: "duplicate label".into(),
        });
    }
    Ok(())
}

/// Assign articles to strata by publication date. Returns the strata in
/// config order and the ids of articles outside every stratum.
pub fn stratify(
    articles: &[Article],
    specs: &[StratumSpec],
) -> Result<(Vec<Stratum>, Vec<String>), SamplerError> {
    validate_strata(specs)?;
    let mut strata: Vec<Stratum> = specs
        .iter()
        .map(|s| Stratum {
            label: s.label.clone(),
            start: s.start_date,
            end: s.end_date,
            population_ids: Vec::new(),
        })
        .collect();
    let mut unassigned = Vec::new();
    for a in articles {
        let day = a.timestamp.date_naive();
        match strata.iter_mut().find(|s| s.start <= day && day < s.end) {
            Some(s) => s.population_ids.push(a.id.clone()),
            None => unassigned.push(a.id.clone()),
        }
    }
    Ok((strata, unassigned))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderPolicy {
    /// Pure floor formula; leftover seats stay unallocated.
    #[default]
    Floor,
    /// Leftover seats go to the largest fractional parts.
    LargestRemainder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumAllocation {
    pub label: String,
    pub population: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub per_stratum: Vec<StratumAllocation>,
    pub n_total: u64,
    pub policy: RemainderPolicy,
}

impl AllocationPlan {
    pub fn get(&self, label: &str) -> Option<u64> {
        self.per_stratum.iter().find(|s| s.label == label).map(|s| s.n)
    }

    pub fn allocated(&self) -> u64 {
        self.per_stratum.iter().map(|s| s.n).sum()
    }

    /// One note per stratum whose allocation differs from an externally
    /// reported sample size.
    pub fn divergence_notes(&self, reported: &BTreeMap<String, u64>) -> Vec<String> {
        self.per_stratum
            .iter()
            .filter_map(|s| {
                let r = *reported.get(&s.label)?;
                (r != s.n).then(|| {
                    format!(
                        "allocation divergence: stratum {} (population {}) gets {} by proportional allocation, reported sample is {} (difference {:+})",
                        s.label,
                        s.population,
                        s.n,
                        r,
                        s.n as i64 - r as i64
                    )
                })
            })
            .collect()
    }
}

/// `n_t = ⌊n_total · |C_t| / |C|⌋` in exact integer arithmetic, optionally
/// topping up by largest remainder (ties: earlier stratum first).
pub fn allocate_proportional(
    populations: &[(String, u64)],
    n_total: u64,
    policy: RemainderPolicy,
) -> Result<AllocationPlan, SamplerError> {
    if populations.is_empty() {
        return Err(SamplerError::NoStrata);
    }
    if n_total == 0 {
        return Err(SamplerError::ZeroTotal);
    }
    if let Some((label, _)) = populations.iter().find(|(_, p)| *p == 0) {
        return Err(SamplerError::EmptyStratum(label.clone()));
    }
    let total: u128 = populations.iter().map(|(_, p)| u128::from(*p)).sum();
    if u128::from(n_total) > total {
        return Err(SamplerError::TotalExceedsPopulation {
            n_total,
            population: total as u64,
        });
    }
    let mut per_stratum = Vec::with_capacity(populations.len());
    let mut remainders = Vec::with_capacity(populations.len());
    for (i, (label, pop)) in populations.iter().enumerate() {
        let scaled = u128::from(n_total) * u128::from(*pop);
        per_stratum.push(StratumAllocation {
            label: label.clone(),
            population: *pop,
            n: (scaled / total) as u64,
        });
        remainders.push((scaled % total, i));
    }
    if policy == RemainderPolicy::LargestRemainder {
        let leftover = n_total - per_stratum.iter().map(|s| s.n).sum::<u64>();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter().take(leftover as usize) {
            per_stratum[i].n += 1;
        }
    }
    Ok(AllocationPlan {
        per_stratum,
        n_total,
        policy,
    })
}
