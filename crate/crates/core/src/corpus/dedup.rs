//! LSH-banded near-duplicate removal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::minhash::{estimate_jaccard, MinHashParams, MinHashSignature, MinHasher};
use super::{Article, MinHashError};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupConfig {
    /// Pairs whose estimated Jaccard reaches this value are duplicates.
    pub threshold: f64,
    pub minhash: MinHashParams,
    pub bands: usize,
    pub rows: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            minhash: MinHashParams::default(),
            bands: 32,
            rows: 4,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DedupError {
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("bands * rows = {0} exceeds num_perm = {1}")]
    BandingTooWide(usize, usize),
    #[error("bands and rows must be positive")]
    EmptyBanding,
    #[error(transparent)]
    MinHash(#[from] MinHashError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub canonical_id: String,
    pub duplicate_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub clusters: Vec<DuplicateCluster>,
    pub removed_fraction: f64,
    pub threshold: f64,
    pub total: usize,
    pub removed: usize,
    pub candidate_pairs: usize,
    pub confirmed_pairs: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes root so component roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn band_key(band: usize, values: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ (band as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for v in values {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Remove near-duplicates, keeping the earliest article (ties: smallest id)
/// of each connected component of confirmed pairs. The canonical list keeps
/// input order.
pub fn dedup(
    articles: &[Article],
    config: &DedupConfig,
) -> Result<(Vec<Article>, DedupReport), DedupError> {
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(DedupError::BadThreshold(config.threshold));
    }
    if config.bands == 0 || config.rows == 0 {
        return Err(DedupError::EmptyBanding);
    }
    if config.bands * config.rows > config.minhash.num_perm {
        return Err(DedupError::BandingTooWide(
            config.bands * config.rows,
            config.minhash.num_perm,
        ));
    }
    let hasher = MinHasher::new(config.minhash)?;

    // Articles without tokens have no signature and are never duplicates.
    let signatures: Vec<Option<MinHashSignature>> =
        par::map(articles, |a| hasher.signature(&a.dedup_text()).ok());

    let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, sig) in signatures.iter().enumerate() {
        let Some(sig) = sig else { continue };
        for band in 0..config.bands {
            let slice = &sig.values[band * config.rows..(band + 1) * config.rows];
            buckets.entry(band_key(band, slice)).or_default().push(i);
        }
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for members in buckets.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                candidates.push(if i < j { (i, j) } else { (j, i) });
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    let confirmed: Vec<bool> = par::map(&candidates, |&(i, j)| {
        match (&signatures[i], &signatures[j]) {
            (Some(a), Some(b)) => estimate_jaccard(a, b).is_ok_and(|s| s >= config.threshold),
            _ => false,
        }
    });

    let mut uf = UnionFind::new(articles.len());
    let mut confirmed_pairs = 0;
    for (&(i, j), &ok) in candidates.iter().zip(&confirmed) {
        if ok {
            confirmed_pairs += 1;
            uf.union(i, j);
        }
    }

    let mut components: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..articles.len() {
        let root = uf.find(i);
        components.entry(root).or_default().push(i);
    }
    let mut removed_idx = vec![false; articles.len()];
    let mut clusters = Vec::new();
    for members in components.values().filter(|m| m.len() > 1) {
        let canonical = *members
            .iter()
            .min_by(|&&a, &&b| {
                (articles[a].timestamp, &articles[a].id).cmp(&(articles[b].timestamp, &articles[b].id))
            })
            .expect("component is non-empty");
        let mut duplicate_ids: Vec<String> = members
            .iter()
            .filter(|&&m| m != canonical)
            .map(|&m| {
                removed_idx[m] = true;
                articles[m].id.clone()
            })
            .collect();
        duplicate_ids.sort();
        clusters.push(DuplicateCluster {
            canonical_id: articles[canonical].id.clone(),
            duplicate_ids,
        });
    }
    clusters.sort_by(|a, b| a.canonical_id.cmp(&b.canonical_id));

    let canonical: Vec<Article> = articles
        .iter()
        .zip(&removed_idx)
        .filter(|(_, &r)| !r)
        .map(|(a, _)| a.clone())
        .collect();
    let removed = articles.len() - canonical.len();
    let report = DedupReport {
        clusters,
        removed_fraction: if articles.is_empty() {
            0.0
        } else {
            removed as f64 / articles.len() as f64
        },
        threshold: config.threshold,
        total: articles.len(),
        removed,
        candidate_pairs: candidates.len(),
        confirmed_pairs,
    };
    Ok((canonical, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::exact_jaccard;

    fn article(id: &str, day: u32, body: &str) -> Article {
        Article {
            id: id.into(),
            timestamp: format!("2012-03-{day:02}T00:00:00Z").parse().unwrap(),
            headline: "Wire story".into(),
            lead: String::new(),
            body: body.into(),
            djid_codes: Default::default(),
            source_id: "DJ".into(),
        }
    }

    fn story(seed: usize, n: usize) -> String {
        (0..n).map(|i| format!("t{seed}x{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn no_duplicates_is_identity() {
        let arts: Vec<_> = (0..5).map(|i| article(&format!("a{i}"), 1, &story(i, 60))).collect();
        let (canon, report) = dedup(&arts, &DedupConfig::default()).unwrap();
        assert_eq!(canon, arts);
        assert_eq!(report.removed_fraction, 0.0);
        assert!(report.clusters.is_empty());
    }

    #[test]
    fn three_copies_plus_one() {
        let body = story(1, 80);
        let arts = vec![
            article("c", 3, &body),
            article("a", 2, &body),
            article("b", 2, &body),
            article("z", 1, &story(2, 80)),
        ];
        // brute-force all-pairs oracle on the fixture
        let mut dup_pairs = 0;
        for i in 0..arts.len() {
            for j in i + 1..arts.len() {
                if exact_jaccard(&arts[i].dedup_text(), &arts[j].dedup_text(), 5) >= 0.9 {
                    dup_pairs += 1;
                }
            }
        }
        assert_eq!(dup_pairs, 3);
        let (canon, report) = dedup(&arts, &DedupConfig::default()).unwrap();
        let ids: Vec<_> = canon.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "z"]);
        assert_eq!(report.removed_fraction, 0.5);
        assert_eq!(
            report.clusters,
            vec![DuplicateCluster {
                canonical_id: "a".into(),
                duplicate_ids: vec!["b".into(), "c".into()],
            }]
        );
    }

    #[test]
    fn idempotent() {
        let body = story(5, 50);
        let arts = vec![
            article("a", 1, &body),
            article("b", 2, &body),
            article("c", 3, &story(6, 50)),
        ];
        let (once, _) = dedup(&arts, &DedupConfig::default()).unwrap();
        let (twice, report) = dedup(&once, &DedupConfig::default()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(report.removed, 0);
    }

    #[test]
    fn config_validation() {
        let bad = DedupConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert_eq!(dedup(&[], &bad).unwrap_err(), DedupError::BadThreshold(0.0));
        let wide = DedupConfig {
            bands: 64,
            ..Default::default()
        };
        assert_eq!(dedup(&[], &wide).unwrap_err(), DedupError::BandingTooWide(256, 128));
    }
}
