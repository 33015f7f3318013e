//! MinHash signatures over word-token shingles.
//!
//! Each permutation is a universal hash `(a * x + b) mod (2^61 - 1)` applied
//! to a 64-bit FNV-1a hash of the shingle; the signature keeps the minimum
//! per permutation. The fraction of agreeing positions between two
//! signatures estimates the Jaccard similarity of the shingle sets.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashParams {
    pub num_perm: usize,
    pub shingle_width: usize,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            num_perm: 128,
            shingle_width: 5,
            seed: 0x5eed_1e55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub num_perm: usize,
    pub shingle_width: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MinHashError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("num_perm must be at least 16, got {0}")]
    TooFewPermutations(usize),
    #[error("shingle width must be at least 1")]
    ZeroWidth,
    #[error("signature length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone)]
pub struct MinHasher {
    params: MinHashParams,
    coeffs: Vec<(u64, u64)>,
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + (hi >> 61);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

#[inline]
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn lower_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Shingles of `width` consecutive lowercased whitespace tokens. Texts with
/// fewer tokens than `width` yield one shingle of all tokens.
pub fn shingle_set(text: &str, width: usize) -> BTreeSet<String> {
    let toks = lower_tokens(text);
    if toks.is_empty() || width == 0 {
        return BTreeSet::new();
    }
    if toks.len() <= width {
        return std::iter::once(toks.join(" ")).collect();
    }
    toks.windows(width).map(|w| w.join(" ")).collect()
}

/// Exact Jaccard similarity of the shingle sets of two texts.
pub fn exact_jaccard(a: &str, b: &str, width: usize) -> f64 {
    let sa = shingle_set(a, width);
    let sb = shingle_set(b, width);
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

impl MinHasher {
    pub fn new(params: MinHashParams) -> Result<Self, MinHashError> {
        if params.num_perm < 16 {
            return Err(MinHashError::TooFewPermutations(params.num_perm));
        }
        if params.shingle_width == 0 {
            return Err(MinHashError::ZeroWidth);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let coeffs = (0..params.num_perm)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        Ok(Self { params, coeffs })
    }

    pub fn params(&self) -> &MinHashParams {
        &self.params
    }

    fn shingle_hashes(&self, text: &str) -> HashSet<u64> {
        let toks = lower_tokens(text);
        let width = self.params.shingle_width;
        let mut out = HashSet::new();
        if toks.is_empty() {
            return out;
        }
        if toks.len() <= width {
            out.insert(fnv1a(toks.join(" ").as_bytes()));
            return out;
        }
        let mut buf = String::new();
        for w in toks.windows(width) {
            buf.clear();
            for (i, t) in w.iter().enumerate() {
                if i > 0 {
                    buf.push(' ');
                }
                buf.push_str(t);
            }
            out.insert(fnv1a(buf.as_bytes()));
        }
        out
    }

    pub fn signature(&self, text: &str) -> Result<MinHashSignature, MinHashError> {
        let shingles = self.shingle_hashes(text);
        if shingles.is_empty() {
            return Err(MinHashError::EmptyText);
        }
        let mut values = vec![u64::MAX; self.params.num_perm];
        for &h in &shingles {
            let x = u128::from(h % MERSENNE_61);
            for (slot, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let v = mod_mersenne(u128::from(a) * x + u128::from(b));
                if v < *slot {
                    *slot = v;
                }
            }
        }
        Ok(MinHashSignature {
            values,
            num_perm: self.params.num_perm,
            shingle_width: self.params.shingle_width,
        })
    }
}

pub fn minhash_signature(text: &str, params: MinHashParams) -> Result<MinHashSignature, MinHashError> {
    MinHasher::new(params)?.signature(text)
}

/// Fraction of positions where the two signatures agree.
pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, MinHashError> {
    if a.values.len() != b.values.len() {
        return Err(MinHashError::LengthMismatch(a.values.len(), b.values.len()));
    }
    if a.values.is_empty() {
        return Ok(1.0);
    }
    let same = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.values.len() as f64)
}
