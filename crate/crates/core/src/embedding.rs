//! Externally produced sentence embeddings and the weighted
//! headline/lead article representation.
//!
//! File format (JSONL): line 1 is a header
//! `{"dims": int, "encoder_name": string, "count": int}`, then one line per
//! article `{"article_id": string, "headline_vec": [float], "lead_vec": [float]}`.
//! Vectors are L2-normalized at load time.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{read_text, write_text, IoError};

/// Tolerance for unit norm after load-time normalization.
pub const LOAD_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub dims: usize,
    pub encoder_name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub article_id: String,
    pub headline_vec: Vec<f64>,
    pub lead_vec: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dims(&self) -> usize {
        self.headline_vec.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file has no header line")]
    MissingHeader,
    #[error("record `{article_id}` (line {line}): {field} has length {found}, header dims = {expected}")]
    DimensionMismatch {
        article_id: String,
        line: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("record `{article_id}` (line {line}): {field} contains a non-finite value")]
    NonFinite {
        article_id: String,
        line: usize,
        field: &'static str,
    },
    #[error("record `{article_id}` (line {line}): duplicate article id")]
    DuplicateId { article_id: String, line: usize },
    #[error("record `{article_id}` (line {line}): {field} has zero norm")]
    ZeroVector {
        article_id: String,
        line: usize,
        field: &'static str,
    },
    #[error("header count {header} but {found} records")]
    CountMismatch { header: usize, found: usize },
    #[error("weights must be non-negative and not both zero, got ({0}, {1})")]
    BadWeights(f64, f64),
    #[error("composed representation has zero norm")]
    ZeroNorm,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `None` for a zero (or non-finite) norm.
pub fn l2_normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

/// Cosine of two unit vectors (their dot product).
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    Ok(dot(a, b).clamp(-1.0, 1.0))
}

/// Unit vector of length `2 * dims`: the L2-normalized concatenation of
/// `headline_weight * headline_vec` and `lead_weight * lead_vec`.
pub fn compose_representation(
    rec: &EmbeddingRecord,
    headline_weight: f64,
    lead_weight: f64,
) -> Result<Vec<f64>, EmbeddingError> {
    let valid = |w: f64| w.is_finite() && w >= 0.0;
    if !valid(headline_weight) || !valid(lead_weight) || (headline_weight == 0.0 && lead_weight == 0.0)
    {
        return Err(EmbeddingError::BadWeights(headline_weight, lead_weight));
    }
    let concat: Vec<f64> = rec
        .headline_vec
        .iter()
        .map(|x| headline_weight * x)
        .chain(rec.lead_vec.iter().map(|x| lead_weight * x))
        .collect();
    l2_normalized(&concat).ok_or(EmbeddingError::ZeroNorm)
}

/// Immutable store of validated, normalized records keyed by article id.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    header: EmbeddingHeader,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines.next().ok_or(EmbeddingError::MissingHeader)?;
        let header: EmbeddingHeader =
            serde_json::from_str(htext).map_err(|e| EmbeddingError::Parse {
                line: hline,
                message: format!("header: {e}"),
            })?;
        let mut records = Vec::new();
        let mut index = HashMap::new();
        for (line, raw) in lines {
            let rec: EmbeddingRecord =
                serde_json::from_str(raw).map_err(|e| EmbeddingError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            let rec = validate_record(rec, header.dims, line)?;
            if index.insert(rec.article_id.clone(), records.len()).is_some() {
                return Err(EmbeddingError::DuplicateId {
                    article_id: rec.article_id,
                    line,
                });
            }
            records.push(rec);
        }
        if records.len() != header.count {
            return Err(EmbeddingError::CountMismatch {
                header: header.count,
                found: records.len(),
            });
        }
        Ok(Self {
            header,
            records,
            index,
        })
    }

    /// Build a store from in-memory records, applying the load-time checks.
    pub fn from_records(
        encoder_name: &str,
        dims: usize,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, EmbeddingError> {
        let mut text = serde_json::to_string(&EmbeddingHeader {
            dims,
            encoder_name: encoder_name.to_string(),
            count: records.len(),
        })
        .expect("header serializes");
        for r in &records {
            text.push('\n');
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
        }
        Self::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbeddingError> {
        Ok(write_text(path, &self.to_jsonl())?)
    }

    pub fn header(&self) -> &EmbeddingHeader {
        &self.header
    }

    pub fn dims(&self) -> usize {
        self.header.dims
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, article_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(article_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }
}

fn validate_record(
    mut rec: EmbeddingRecord,
    dims: usize,
    line: usize,
) -> Result<EmbeddingRecord, EmbeddingError> {
    for (field, v) in [("headline_vec", &mut rec.headline_vec), ("lead_vec", &mut rec.lead_vec)] {
        if v.len() != dims {
            return Err(EmbeddingError::DimensionMismatch {
                article_id: rec.article_id.clone(),
                line,
                field,
                expected: dims,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                article_id: rec.article_id.clone(),
                line,
                field,
            });
        }
        *v = l2_normalized(v).ok_or_else(|| EmbeddingError::ZeroVector {
            article_id: rec.article_id.clone(),
            line,
            field,
        })?;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER4: &str = r#"{"dims":4,"encoder_name":"stub","count":1}"#;

    #[test]
    fn dimension_mismatch() {
        let text = format!(
            "{HEADER4}\n{}",
            r#"{"article_id":"a","headline_vec":[1,0,0],"lead_vec":[1,0,0,0]}"#
        );
        let err = EmbeddingStore::parse(&text).unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch { ref article_id, expected: 4, found: 3, .. } if article_id == "a"
        ));
    }

    #[test]
    fn non_finite_value() {
        // JSON has no NaN literal; build the record in memory instead.
        let rec = EmbeddingRecord {
            article_id: "a".into(),
            headline_vec: vec![1.0, f64::NAN],
            lead_vec: vec![1.0, 0.0],
        };
        assert!(matches!(validate_record(rec, 2, 2), Err(EmbeddingError::NonFinite { .. })));
    }

    #[test]
    fn duplicate_id() {
        let rec = r#"{"article_id":"a","headline_vec":[1,0],"lead_vec":[0,1]}"#;
        let text = format!("{{\"dims\":2,\"encoder_name\":\"stub\",\"count\":2}}\n{rec}\n{rec}");
        assert!(matches!(
            EmbeddingStore::parse(&text).unwrap_err(),
            EmbeddingError::DuplicateId { line: 3, .. }
        ));
    }

    #[test]
    fn count_mismatch() {
        assert!(matches!(
            EmbeddingStore::parse(HEADER4).unwrap_err(),
            EmbeddingError::CountMismatch { header: 1, found: 0 }
        ));
        assert!(matches!(EmbeddingStore::parse("").unwrap_err(), EmbeddingError::MissingHeader));
    }

    #[test]
    fn round_trip_two_records() {
        let text = "{\"dims\":2,\"encoder_name\":\"stub\",\"count\":2}\n\
            {\"article_id\":\"a\",\"headline_vec\":[3,4],\"lead_vec\":[0,2]}\n\
            {\"article_id\":\"b\",\"headline_vec\":[1,0],\"lead_vec\":[0.6,0.8]}\n";
        let store = EmbeddingStore::parse(text).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("a").unwrap().headline_vec, vec![0.6, 0.8]);
        let again = EmbeddingStore::parse(&store.to_jsonl()).unwrap();
        assert_eq!(again.records(), store.records());
        assert_eq!(again.to_jsonl(), store.to_jsonl());
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        l2_normalized(v).unwrap()
    }

    #[test]
    fn two_to_one_weighting() {
        let u = unit(&[1.0, 2.0, 2.0]);
        let rec = EmbeddingRecord {
            article_id: "a".into(),
            headline_vec: u.clone(),
            lead_vec: u,
        };
        let weighted = compose_representation(&rec, 2.0, 1.0).unwrap();
        let even = compose_representation(&rec, 1.0, 1.0).unwrap();
        // (2u,u)·(u,u) / (√5 · √2) = 3 / √10
        let expected = 3.0 / (5f64.sqrt() * 2f64.sqrt());
        assert!((cosine(&weighted, &even).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.9487).abs() < 1e-4);
    }

    #[test]
    fn zero_lead_weight_keeps_headline_direction() {
        let rec = EmbeddingRecord {
            article_id: "a".into(),
            headline_vec: vec![0.6, 0.8],
            lead_vec: vec![1.0, 0.0],
        };
        assert_eq!(compose_representation(&rec, 1.0, 0.0).unwrap(), vec![0.6, 0.8, 0.0, 0.0]);
        assert!(matches!(
            compose_representation(&rec, 0.0, 0.0),
            Err(EmbeddingError::BadWeights(..))
        ));
        assert!(matches!(
            compose_representation(&rec, -1.0, 1.0),
            Err(EmbeddingError::BadWeights(..))
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let h = 2f64.sqrt() / 2.0;
        assert!((cosine(&[1.0, 0.0], &[h, h]).unwrap() - 0.7071).abs() < 1e-4);
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(EmbeddingError::LengthMismatch(1, 2))));
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, d).prop_filter("non-zero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn composed_is_unit_and_scale_invariant(
            h in vec_strategy(6), l in vec_strategy(6),
            hw in 0.01f64..5.0, lw in 0.0f64..5.0, c in 0.1f64..10.0,
        ) {
            let rec = EmbeddingRecord { article_id: "x".into(), headline_vec: unit(&h), lead_vec: unit(&l) };
            let a = compose_representation(&rec, hw, lw).unwrap();
            prop_assert!((norm(&a) - 1.0).abs() < 1e-6);
            let b = compose_representation(&rec, hw * c, lw * c).unwrap();
            prop_assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn cosine_symmetric(a in vec_strategy(5), b in vec_strategy(5)) {
            let (a, b) = (unit(&a), unit(&b));
            prop_assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
