//! Maximal Marginal Relevance selection within one cluster.

use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::embedding::{dot, l2_normalized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmrCandidate {
    pub id: String,
    /// Unit vector.
    pub vector: Vec<f64>,
    /// Cosine to the cluster centroid.
    pub centrality: f64,
}

impl MmrCandidate {
    /// Builds candidates with centrality measured against the normalized mean
    /// of `vectors`.
    pub fn from_cluster(ids: &[String], vectors: &[Vec<f64>]) -> Vec<MmrCandidate> {
        let dims = vectors.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; dims];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let centroid = l2_normalized(&mean);
        ids.iter()
            .zip(vectors)
            .map(|(id, v)| MmrCandidate {
                id: id.clone(),
                vector: v.clone(),
                centrality: centroid.as_ref().map_or(0.0, |c| dot(c, v)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmrPick {
    pub id: String,
    /// 1-based selection order.
    pub rank: usize,
    pub score: f64,
}

/// Greedy MMR: each step picks the remaining candidate maximizing
/// `λ·centrality − (1−λ)·max_{s ∈ selected} cos(c, s)`, with an empty
/// selection contributing no penalty. Ties go to the smaller id.
pub fn mmr_select(
    candidates: &[MmrCandidate],
    quota: usize,
    lambda: f64,
) -> Result<Vec<MmrPick>, SamplerError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SamplerError::BadLambda(lambda));
    }
    if quota == 0 {
        return Ok(Vec::new());
    }
    if candidates.is_empty() {
        return Err(SamplerError::NoCandidates(quota));
    }
    if quota > candidates.len() {
        return Err(SamplerError::QuotaTooLarge {
            quota,
            available: candidates.len(),
        });
    }
    let mut taken = vec![false; candidates.len()];
    // running max similarity to the selection; None while it is empty
    let mut max_sim: Vec<Option<f64>> = vec![None; candidates.len()];
    let mut picks = Vec::with_capacity(quota);
    for rank in 1..=quota {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let penalty = max_sim[i].unwrap_or(0.0);
            let score = lambda * c.centrality - (1.0 - lambda) * penalty;
            let better = match best {
                None => true,
                Some((b, bs)) => score > bs || (score == bs && c.id < candidates[b].id),
            };
            if better {
                best = Some((i, score));
            }
        }
        let (chosen, score) = best.expect("quota never exceeds candidates");
        taken[chosen] = true;
        picks.push(MmrPick {
            id: candidates[chosen].id.clone(),
            rank,
            score,
        });
        for (i, c) in candidates.iter().enumerate() {
            if !taken[i] {
                let s = dot(&c.vector, &candidates[chosen].vector);
                max_sim[i] = Some(max_sim[i].map_or(s, |m| m.max(s)));
            }
        }
    }
    Ok(picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, v: &[f64], c: f64) -> MmrCandidate {
        MmrCandidate {
            id: id.into(),
            vector: l2_normalized(v).unwrap(),
            centrality: c,
        }
    }

    fn fixture() -> Vec<MmrCandidate> {
        vec![
            cand("a", &[1.0, 0.0, 0.0], 0.95),
            cand("b", &[0.99, 0.1, 0.0], 0.94),
            cand("c", &[0.0, 1.0, 0.0], 0.60),
            cand("d", &[0.0, 0.0, 1.0], 0.55),
            cand("e", &[0.7, 0.7, 0.0], 0.80),
            cand("f", &[0.5, 0.5, 0.7], 0.75),
        ]
    }

    fn ids(p: &[MmrPick]) -> Vec<&str> {
        p.iter().map(|x| x.id.as_str()).collect()
    }

    #[test]
    fn quota_one_takes_most_central() {
        let p = mmr_select(&fixture(), 1, 0.3).unwrap();
        assert_eq!(ids(&p), ["a"]);
    }

    #[test]
    fn lambda_one_is_top_k() {
        let p = mmr_select(&fixture(), 4, 1.0).unwrap();
        assert_eq!(ids(&p), ["a", "b", "e", "f"]);
    }

    #[test]
    fn hand_fixture_lambda_07() {
        // step 2: c is orthogonal to a and scores 0.7·0.6 = 0.42, ahead of
        // d (0.385), f (≈0.374), b (≈0.360) and e (≈0.348); step 3: d keeps
        // 0.385 since it is orthogonal to both picks
        let p = mmr_select(&fixture(), 3, 0.7).unwrap();
        assert_eq!(ids(&p), ["a", "c", "d"]);
    }

    #[test]
    fn ties_break_by_id() {
        let c = vec![cand("z", &[1.0, 0.0], 0.5), cand("m", &[0.0, 1.0], 0.5)];
        assert_eq!(ids(&mmr_select(&c, 1, 0.7).unwrap()), ["m"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(mmr_select(&[], 1, 0.7), Err(SamplerError::NoCandidates(1))));
        assert!(mmr_select(&[], 0, 0.7).unwrap().is_empty());
        assert!(matches!(
            mmr_select(&fixture(), 7, 0.7),
            Err(SamplerError::QuotaTooLarge { .. })
        ));
        assert!(matches!(mmr_select(&fixture(), 1, 1.5), Err(SamplerError::BadLambda(_))));
    }

    #[test]
    fn centrality_from_cluster() {
        let ids: Vec<String> = vec!["x".into(), "y".into()];
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c = MmrCandidate::from_cluster(&ids, &v);
        assert!((c[0].centrality - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }
}
