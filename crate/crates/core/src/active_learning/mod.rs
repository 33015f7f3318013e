//! Uncertainty-driven enrichment of the sample: score a pool, keep the
//! articles whose prediction entropy is above a percentile, repeat until the
//! entropy histograms of consecutive selections stop moving.

mod scorers;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use scorers::{LexicalScorer, ScriptedScorer, SubprocessScorer};

use crate::par;
use crate::stats::{entropy, jsd_counts, DistributionError};

#[derive(Debug, thiserror::Error)]
pub enum ActiveLearningError {
    #[error("no uncertainty scores")]
    EmptyScores,
    #[error("percentile must lie in (0, 100), got {0}")]
    BadPercentile(f64),
    #[error("bins must be at least 1")]
    ZeroBins,
    #[error("scorer must report at least 2 classes")]
    TooFewClasses,
    #[error("article `{article_id}`: {source}")]
    BadDistribution {
        article_id: String,
        source: DistributionError,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ScorerError(pub String);

/// Maps an article to a probability vector over argument-presence classes.
pub trait UncertaintyScorer: Sync {
    fn num_classes(&self) -> usize;
    /// `round` is 1-based, so scripted scorers can change between rounds.
    fn score(&self, round: usize, article_id: &str) -> Result<Vec<f64>, ScorerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub article_id: String,
    pub prob_dist: Vec<f64>,
    /// Natural-log entropy of `prob_dist`.
    pub entropy: f64,
}

impl UncertaintyScore {
    pub fn new(article_id: impl Into<String>, prob_dist: Vec<f64>) -> Result<Self, ActiveLearningError> {
        let article_id = article_id.into();
        match entropy(&prob_dist) {
            Ok(entropy) => Ok(Self {
                article_id,
                prob_dist,
                entropy,
            }),
            Err(source) => Err(ActiveLearningError::BadDistribution { article_id, source }),
        }
    }
}

/// Nearest-rank percentile: the value at 1-based rank `⌈p/100 · n⌉` of the
/// ascending order.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Ids whose entropy strictly exceeds the nearest-rank percentile, ordered
/// by entropy (descending) then id. `cap` truncates that order.
pub fn select_uncertain(
    scores: &[UncertaintyScore],
    percentile: f64,
    cap: Option<usize>,
) -> Result<Vec<String>, ActiveLearningError> {
    if scores.is_empty() {
        return Err(ActiveLearningError::EmptyScores);
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(ActiveLearningError::BadPercentile(percentile));
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.entropy).collect();
    sorted.sort_by(f64::total_cmp);
    let cut = nearest_rank(&sorted, percentile);
    let mut above: Vec<&UncertaintyScore> = scores.iter().filter(|s| s.entropy > cut).collect();
    above.sort_by(|a, b| b.entropy.total_cmp(&a.entropy).then_with(|| a.article_id.cmp(&b.article_id)));
    let ids = above.into_iter().map(|s| s.article_id.clone());
    Ok(match cap {
        Some(c) => ids.take(c).collect(),
        None => ids.collect(),
    })
}

/// Fixed-width histogram of entropies over `[0, ln k]`; the top edge falls in
/// the last bin.
pub fn entropy_histogram(entropies: &[f64], num_classes: usize, bins: usize) -> Vec<u64> {
    let max = (num_classes as f64).ln();
    let mut h = vec![0u64; bins];
    for &e in entropies {
        let b = ((e / max) * bins as f64).floor();
        let b = if b.is_finite() { b.max(0.0) as usize } else { 0 };
        h[b.min(bins - 1)] += 1;
    }
    h
}

/// Base-2 JSD between two histograms after normalizing, with every empty bin
/// counted as 1.
pub fn histogram_jsd(a: &[u64], b: &[u64]) -> Result<f64, DistributionError> {
    let smooth = |h: &[u64]| -> Vec<f64> { h.iter().map(|&c| c.max(1) as f64).collect() };
    jsd_counts(&smooth(a), &smooth(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichmentConfig {
    pub percentile: f64,
    pub bins: usize,
    pub jsd_threshold: f64,
    pub max_rounds: usize,
    /// Per-round cap on selections.
    pub cap: Option<usize>,
    /// Bound on concurrent scorer calls; 0 leaves it to the thread pool.
    pub workers: usize,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            percentile: 90.0,
            bins: 20,
            jsd_threshold: 0.05,
            max_rounds: 10,
            cap: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRound {
    pub round_index: usize,
    pub selected_ids: Vec<String>,
    /// Histogram of the selected articles' entropies.
    pub entropy_histogram: Vec<u64>,
    pub jsd_from_previous: Option<f64>,
    pub scored: usize,
    /// Articles whose scoring failed this round.
    #[serde(default)]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rounds: Vec<EnrichmentRound>,
    pub converged: bool,
    pub threshold: f64,
    /// Set when a round failed entirely and the loop stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl ConvergenceReport {
    pub fn selected(&self) -> Vec<String> {
        self.rounds.iter().flat_map(|r| r.selected_ids.iter().cloned()).collect()
    }
}

pub fn run_enrichment(
    scorer: &dyn UncertaintyScorer,
    pool: &[String],
    config: &EnrichmentConfig,
) -> Result<ConvergenceReport, ActiveLearningError> {
    if !(config.percentile > 0.0 && config.percentile < 100.0) {
        return Err(ActiveLearningError::BadPercentile(config.percentile));
    }
    if config.bins == 0 {
        return Err(ActiveLearningError::ZeroBins);
    }
    let k = scorer.num_classes();
    if k < 2 {
        return Err(ActiveLearningError::TooFewClasses);
    }
    let mut remaining: BTreeSet<String> = pool.iter().cloned().collect();
    let mut report = ConvergenceReport {
        rounds: Vec::new(),
        converged: false,
        threshold: config.jsd_threshold,
        aborted: None,
    };
    for round in 1..=config.max_rounds {
        if remaining.is_empty() {
            break;
        }
        let ids: Vec<&String> = remaining.iter().collect();
        let results = par::map_bounded(&ids, config.workers, |id| {
            scorer
                .score(round, id)
                .map_err(|e| e.to_string())
                .and_then(|d| {
                    if d.len() != k {
                        return Err(format!("expected {k} classes, got {}", d.len()));
                    }
                    UncertaintyScore::new(id.as_str(), d).map_err(|e| e.to_string())
                })
        });
        let mut scores = Vec::with_capacity(ids.len());
        let mut skipped = Vec::new();
        for (id, r) in ids.iter().zip(results) {
            match r {
                Ok(s) => scores.push(s),
                Err(e) => {
                    log::warn!("round {round}: scoring `{id}` failed: {e}");
                    skipped.push((*id).clone());
                }
            }
        }
        if scores.is_empty() {
            report.aborted = Some(format!("round {round}: every scorer call failed"));
            report.converged = false;
            return Ok(report);
        }
        let selected_ids = select_uncertain(&scores, config.percentile, config.cap)?;
        let chosen: BTreeSet<&str> = selected_ids.iter().map(String::as_str).collect();
        let selected_entropies: Vec<f64> = scores
            .iter()
            .filter(|s| chosen.contains(s.article_id.as_str()))
            .map(|s| s.entropy)
            .collect();
        let entropy_histogram = entropy_histogram(&selected_entropies, k, config.bins);
        let jsd_from_previous = match report.rounds.last() {
            Some(prev) => Some(
                histogram_jsd(&prev.entropy_histogram, &entropy_histogram)
                    .expect("smoothed histograms have positive mass"),
            ),
            None => None,
        };
        for id in &selected_ids {
            remaining.remove(id);
        }
        report.converged = jsd_from_previous.is_some_and(|j| j < config.jsd_threshold);
        report.rounds.push(EnrichmentRound {
            round_index: round,
            selected_ids,
            entropy_histogram,
            jsd_from_previous,
            scored: scores.len(),
            skipped,
        });
        if report.converged {
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn score(id: &str, e: f64) -> UncertaintyScore {
        UncertaintyScore {
            article_id: id.into(),
            prob_dist: vec![],
            entropy: e,
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.7, 0.3]).unwrap() - 0.6108643020548935).abs() < 1e-12);
        assert!(UncertaintyScore::new("x", vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn ten_distinct_selects_top_one() {
        let s: Vec<_> = (0..10).map(|i| score(&format!("a{i}"), i as f64 * 0.1)).collect();
        assert_eq!(select_uncertain(&s, 90.0, None).unwrap(), ["a9"]);
    }

    #[test]
    fn all_equal_selects_nothing() {
        let s: Vec<_> = (0..10).map(|i| score(&format!("a{i}"), 0.4)).collect();
        assert!(select_uncertain(&s, 90.0, None).unwrap().is_empty());
    }

    #[test]
    fn select_errors() {
        assert!(matches!(select_uncertain(&[], 90.0, None), Err(ActiveLearningError::EmptyScores)));
        assert!(select_uncertain(&[score("a", 0.1)], 100.0, None).is_err());
    }

    #[test]
    fn hundred_random_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s: Vec<_> = (0..100)
                .map(|i| score(&format!("a{i:03}"), (rng.gen_range(0..40) as f64) / 20.0))
                .collect();
            // oracle: sort ascending, take value at index ⌈0.9·100⌉−1 = 89,
            // keep everything strictly greater
            let mut sorted: Vec<&UncertaintyScore> = s.iter().collect();
            sorted.sort_by(|a, b| a.entropy.partial_cmp(&b.entropy).unwrap());
            let cut = sorted[89].entropy;
            let mut want: Vec<(f64, String)> = s
                .iter()
                .filter(|x| x.entropy > cut)
                .map(|x| (-x.entropy, x.article_id.clone()))
                .collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<String> = want.into_iter().map(|w| w.1).collect();
            assert_eq!(select_uncertain(&s, 90.0, None).unwrap(), want);
            assert_eq!(select_uncertain(&s, 90.0, Some(3)).unwrap(), want[..want.len().min(3)]);
        }
    }

    struct Stationary;
    impl UncertaintyScorer for Stationary {
        fn num_classes(&self) -> usize {
            2
        }
        fn score(&self, _: usize, _: &str) -> Result<Vec<f64>, ScorerError> {
            Ok(vec![0.6, 0.4])
        }
    }

    fn pool(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    #[test]
    fn stationary_converges_at_round_two() {
        let r = run_enrichment(&Stationary, &pool(30), &EnrichmentConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.rounds.len(), 2);
        assert_eq!(r.rounds[1].jsd_from_previous, Some(0.0));
    }

    #[test]
    fn scripted_trajectory_matches_hand_values() {
        // 2 classes, 2 bins over [0, ln 2]. Per round the pool gets low
        // entropies except for five high ones; the high ones' bin placement is
        // scripted: round 1 all in bin 0 (entropy just above the rest),
        // rounds 2-3 all in bin 1.
        let ids = pool(100);
        let p_low = [0.99, 0.01];
        let mut rounds = Vec::new();
        for r in 0..3 {
            let mut m = BTreeMap::new();
            for (i, id) in ids.iter().enumerate() {
                let d = if i % 20 == r {
                    if r == 0 { vec![0.9, 0.1] } else { vec![0.5, 0.5] }
                } else {
                    p_low.to_vec()
                };
                m.insert(id.clone(), d);
            }
            rounds.push(m);
        }
        let scorer = ScriptedScorer::new(2, rounds);
        let cfg = EnrichmentConfig {
            bins: 2,
            ..Default::default()
        };
        let r = run_enrichment(&scorer, &ids, &cfg).unwrap();
        assert_eq!(r.rounds.len(), 3);
        assert_eq!(r.rounds[0].entropy_histogram, [5, 0]);
        assert_eq!(r.rounds[1].entropy_histogram, [0, 5]);
        // JSD((5/6, 1/6), (1/6, 5/6)) in bits
        let (a, b) = (5.0f64 / 6.0, 1.0f64 / 6.0);
        let h = |p: f64, q: f64| -(p * p.log2() + q * q.log2());
        let want = h(0.5, 0.5) - h(a, b);
        assert!((r.rounds[1].jsd_from_previous.unwrap() - want).abs() < 1e-12);
        assert_eq!(r.rounds[2].jsd_from_previous, Some(0.0));
        assert!(r.converged);
        let all: BTreeSet<String> = r.selected().into_iter().collect();
        assert_eq!(all.len(), 15);
    }

    struct Failing;
    impl UncertaintyScorer for Failing {
        fn num_classes(&self) -> usize {
            2
        }
        fn score(&self, _: usize, id: &str) -> Result<Vec<f64>, ScorerError> {
            if id.ends_with('7') {
                Err(ScorerError("boom".into()))
            } else {
                Ok(vec![0.5, 0.5])
            }
        }
    }

    #[test]
    fn failures_are_skipped_or_abort() {
        let r = run_enrichment(&Failing, &pool(20), &EnrichmentConfig::default()).unwrap();
        assert_eq!(r.rounds[0].skipped, ["p007", "p017"]);
        let r = run_enrichment(&Failing, &["x7".to_string()], &EnrichmentConfig::default()).unwrap();
        assert!(r.aborted.is_some());
        assert!(r.rounds.is_empty());
    }

    proptest! {
        #[test]
        fn entropy_bounded_and_permutation_invariant(raw in proptest::collection::vec(0.0f64..1.0, 2..=8), rot in 0usize..8) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let e = entropy(&p).unwrap();
            prop_assert!(e >= 0.0 && e <= (p.len() as f64).ln() + 1e-12);
            let mut q = p.clone();
            q.rotate_left(rot % p.len());
            prop_assert!((entropy(&q).unwrap() - e).abs() < 1e-12);
        }

        #[test]
        fn rounds_are_disjoint(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids = pool(60);
            let rounds: Vec<BTreeMap<String, Vec<f64>>> = (0..4).map(|_| {
                ids.iter().map(|id| {
                    let p: f64 = rng.gen_range(0.0..1.0);
                    (id.clone(), vec![p, 1.0 - p])
                }).collect()
            }).collect();
            let scorer = ScriptedScorer::new(2, rounds);
            let cfg = EnrichmentConfig { max_rounds: 4, jsd_threshold: 0.0, ..Default::default() };
            let r = run_enrichment(&scorer, &ids, &cfg).unwrap();
            let mut seen = BTreeSet::new();
            let mut pool_size = ids.len();
            for round in &r.rounds {
                prop_assert_eq!(round.scored, pool_size);
                for id in &round.selected_ids {
                    prop_assert!(seen.insert(id.clone()));
                }
                pool_size -= round.selected_ids.len();
            }
            let last = r.rounds.last().and_then(|x| x.jsd_from_previous);
            prop_assert_eq!(r.converged, last.is_some_and(|j| j < cfg.jsd_threshold));
        }
    }
}
