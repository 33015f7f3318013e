//! Inter-annotator agreement and system-versus-gold metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::consensus::{mask_spans, majority_vote, AnnotatorLabeling, GoldRecord, Span, Task};
use crate::corpus::Article;
use crate::extraction::AfaRecord;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AgreementError {
    #[error("need at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("no unit has two or more labels")]
    NoPairableUnits,
    #[error("row {row} has {found} annotator cells, expected {expected}")]
    RaggedMatrix {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unit {unit} has {found} ratings, unit 0 has {expected}; use Krippendorff's alpha for unequal or missing ratings")]
    UnequalRatings {
        unit: usize,
        expected: u64,
        found: u64,
    },
    #[error("need at least 2 ratings per unit")]
    TooFewRatings,
    #[error("empty input")]
    Empty,
    #[error("masks have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Units × annotators grid of nominal labels; `None` marks a missing
/// annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilityMatrix {
    pub units: Vec<Vec<Option<String>>>,
}

impl ReliabilityMatrix {
    pub fn new(units: Vec<Vec<Option<String>>>) -> Result<Self, AgreementError> {
        let width = units.first().map_or(0, Vec::len);
        if width < 2 {
            return Err(AgreementError::TooFewAnnotators(width));
        }
        for (row, u) in units.iter().enumerate() {
            if u.len() != width {
                return Err(AgreementError::RaggedMatrix {
                    row,
                    expected: width,
                    found: u.len(),
                });
            }
        }
        Ok(Self { units })
    }

    pub fn annotators(&self) -> usize {
        self.units.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub value: f64,
    /// Set when chance agreement is total and the value is fixed at 1.
    pub degenerate: bool,
    /// Pairable values (α) or units (κ) used.
    pub support: usize,
}

/// Krippendorff's α for nominal data via the coincidence matrix. Units
/// with fewer than two labels are ignored.
pub fn krippendorff_alpha_nominal(matrix: &ReliabilityMatrix) -> Result<Coefficient, AgreementError> {
    if matrix.annotators() < 2 {
        return Err(AgreementError::TooFewAnnotators(matrix.annotators()));
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for u in &matrix.units {
        for v in u.iter().flatten() {
            let next = index.len();
            index.entry(v.as_str()).or_insert(next);
        }
    }
    let k = index.len();
    let mut o = vec![vec![0.0f64; k]; k];
    let mut pairable = 0usize;
    for u in &matrix.units {
        let vals: Vec<usize> = u.iter().flatten().map(|v| index[v.as_str()]).collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        pairable += m;
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in vals.iter().enumerate() {
            for (j, &b) in vals.iter().enumerate() {
                if i != j {
                    o[a][b] += w;
                }
            }
        }
    }
    if pairable == 0 {
        return Err(AgreementError::NoPairableUnits);
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += o[c][d];
                expected += n_c[c] * n_c[d];
            }
        }
    }
    if expected == 0.0 {
        return Ok(Coefficient {
            value: 1.0,
            degenerate: true,
            support: pairable,
        });
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    Ok(Coefficient {
        value: 1.0 - d_o / d_e,
        degenerate: false,
        support: pairable,
    })
}

/// Fleiss' κ over a units × categories count grid with a constant number
/// of ratings per unit.
pub fn fleiss_kappa(counts: &[Vec<u64>]) -> Result<Coefficient, AgreementError> {
    let first = counts.first().ok_or(AgreementError::Empty)?;
    let n: u64 = first.iter().sum();
    if n < 2 {
        return Err(AgreementError::TooFewRatings);
    }
    let cats = first.len();
    for (unit, row) in counts.iter().enumerate() {
        let found: u64 = row.iter().sum();
        if found != n || row.len() != cats {
            return Err(AgreementError::UnequalRatings {
                unit,
                expected: n,
                found,
            });
        }
    }
    let units = counts.len() as f64;
    let nf = n as f64;
    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - nf) / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / units;
    let p_e: f64 = (0..cats)
        .map(|j| {
            let pj = counts.iter().map(|r| r[j] as f64).sum::<f64>() / (units * nf);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(Coefficient {
            value: 1.0,
            degenerate: true,
            support: counts.len(),
        });
    }
    Ok(Coefficient {
        value: (p_bar - p_e) / (1.0 - p_e),
        degenerate: false,
        support: counts.len(),
    })
}

/// Converts a reliability matrix into per-unit category counts, keeping
/// only units rated by every annotator.
pub fn fleiss_counts(matrix: &ReliabilityMatrix) -> Vec<Vec<u64>> {
    let labels: BTreeSet<&str> = matrix.units.iter().flatten().flatten().map(String::as_str).collect();
    let labels: Vec<&str> = labels.into_iter().collect();
    matrix
        .units
        .iter()
        .filter(|u| u.iter().all(Option::is_some))
        .map(|u| {
            labels
                .iter()
                .map(|l| u.iter().flatten().filter(|v| v.as_str() == *l).count() as u64)
                .collect()
        })
        .collect()
}

/// `2·TP / (2·TP + FP + FN)` treating `reference` as gold; `None` when
/// neither mask marks anything.
pub fn token_f1(reference: &[u8], other: &[u8]) -> Option<f64> {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&r, &o) in reference.iter().zip(other) {
        match (r == 1, o == 1) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fnn += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fnn;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseF1 {
    pub f1: f64,
    /// Ordered pairs averaged.
    pub pairs: usize,
    /// Ordered pairs skipped because both masks were empty.
    pub skipped_pairs: usize,
}

/// Token F1 averaged over ordered annotator pairs. When every pair is
/// skipped the value is 1 (all annotators agree nothing is marked).
pub fn pairwise_token_f1(masks: &[&[u8]]) -> Result<PairwiseF1, AgreementError> {
    if masks.len() < 2 {
        return Err(AgreementError::TooFewAnnotators(masks.len()));
    }
    for m in masks {
        if m.len() != masks[0].len() {
            return Err(AgreementError::LengthMismatch(masks[0].len(), m.len()));
        }
    }
    let mut total = 0.0;
    let mut pairs = 0;
    let mut skipped_pairs = 0;
    for (i, a) in masks.iter().enumerate() {
        for (j, b) in masks.iter().enumerate() {
            if i == j {
                continue;
            }
            match token_f1(a, b) {
                Some(f) => {
                    total += f;
                    pairs += 1;
                }
                None => skipped_pairs += 1,
            }
        }
    }
    Ok(PairwiseF1 {
        f1: if pairs == 0 { 1.0 } else { total / pairs as f64 },
        pairs,
        skipped_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanMatchMode {
    /// Identical boundaries.
    #[default]
    Exact,
    /// One-to-one greedy matching by descending token F1, threshold 0.5.
    OverlapF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
}

pub const OVERLAP_MATCH_THRESHOLD: f64 = 0.5;

/// One-to-one matches between predicted and gold spans, as index pairs.
pub fn match_spans(predicted: &[Span], gold: &[Span], mode: SpanMatchMode) -> Vec<(usize, usize)> {
    match mode {
        SpanMatchMode::Exact => {
            let mut used = vec![false; gold.len()];
            let mut out = Vec::new();
            for (i, p) in predicted.iter().enumerate() {
                if let Some(j) = (0..gold.len()).find(|&j| !used[j] && gold[j] == *p) {
                    used[j] = true;
                    out.push((i, j));
                }
            }
            out
        }
        SpanMatchMode::OverlapF1 => {
            let mut candidates = Vec::new();
            for (i, p) in predicted.iter().enumerate() {
                for (j, g) in gold.iter().enumerate() {
                    let f = crate::consensus::span_f1(p, g);
                    if f >= OVERLAP_MATCH_THRESHOLD {
                        candidates.push((f, i, j));
                    }
                }
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            let mut pred_used = vec![false; predicted.len()];
            let mut gold_used = vec![false; gold.len()];
            let mut out = Vec::new();
            for (_, i, j) in candidates {
                if !pred_used[i] && !gold_used[j] {
                    pred_used[i] = true;
                    gold_used[j] = true;
                    out.push((i, j));
                }
            }
            out.sort();
            out
        }
    }
}

/// Precision, recall and F1 of predicted spans against gold. An empty list
/// scores 1 against an empty list and 0 against a non-empty one.
pub fn span_f1(predicted: &[Span], gold: &[Span], mode: SpanMatchMode) -> SpanScores {
    let matched = match_spans(predicted, gold, mode).len();
    let ratio = |den: usize, other: usize| {
        if den > 0 {
            matched as f64 / den as f64
        } else if other == 0 {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(predicted.len(), gold.len());
    let recall = ratio(gold.len(), predicted.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SpanScores {
        precision,
        recall,
        f1,
        matched,
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets give 1 with the degenerate flag.
pub fn jaccard_multilabel<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> (f64, bool) {
    let union = a.union(b).count();
    if union == 0 {
        return (1.0, true);
    }
    (a.intersection(b).count() as f64 / union as f64, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub component: String,
    pub metric: String,
    pub value: f64,
    /// Count of units, values or pairs the value rests on.
    pub support: usize,
    #[serde(default)]
    pub degenerate: bool,
}

/// `component,metric,value` rows with three-decimal values.
pub fn table2_csv(reports: &[MetricReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "metric", "value"]).expect("in-memory write");
    for r in reports {
        w.write_record([r.component.as_str(), r.metric.as_str(), &format!("{:.3}", r.value)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn report(component: &str, metric: &str, value: f64, support: usize, degenerate: bool) -> MetricReport {
    MetricReport {
        component: component.into(),
        metric: metric.into(),
        value,
        support,
        degenerate,
    }
}

type ByArticle<'a> = BTreeMap<&'a str, Vec<&'a AnnotatorLabeling>>;

fn by_article(labelings: &[AnnotatorLabeling], task: Task) -> ByArticle<'_> {
    let mut out: ByArticle<'_> = BTreeMap::new();
    for l in labelings.iter().filter(|l| l.task == task) {
        out.entry(l.article_id.as_str()).or_default().push(l);
    }
    for group in out.values_mut() {
        group.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    }
    out
}

fn masks_of<'a>(group: &[&'a AnnotatorLabeling]) -> Vec<&'a [u8]> {
    group.iter().filter_map(|l| l.token_mask.as_deref()).collect()
}

fn categorical_alpha(labelings: &[AnnotatorLabeling], task: Task) -> Option<Result<Coefficient, AgreementError>> {
    let groups = by_article(labelings, task);
    let annotators: BTreeSet<&str> = groups.values().flatten().map(|l| l.annotator_id.as_str()).collect();
    if groups.is_empty() {
        return None;
    }
    let cols: Vec<&str> = annotators.into_iter().collect();
    let units = groups
        .values()
        .map(|g| {
            cols.iter()
                .map(|a| g.iter().find(|l| l.annotator_id == *a).and_then(|l| l.label.clone()))
                .collect()
        })
        .collect();
    Some(ReliabilityMatrix::new(units).and_then(|m| krippendorff_alpha_nominal(&m)))
}

/// Inter-annotator agreement in the layout of the published table: pairwise
/// token F1 for actor spans, α for stance and primary frame, span-level F1
/// for claims (averaged over ordered annotator pairs, then over articles).
/// Fleiss' κ for stance and frame-set Jaccard follow as extra rows. Rows
/// whose task has no usable annotations are left out.
pub fn iaa_report(labelings: &[AnnotatorLabeling], mode: SpanMatchMode) -> Result<Vec<MetricReport>, AgreementError> {
    let mut out = Vec::new();

    let actors = by_article(labelings, Task::ActorSpan);
    let mut f1s = Vec::new();
    let mut skipped_all = 0;
    for group in actors.values() {
        let masks = masks_of(group);
        if masks.len() < 2 {
            continue;
        }
        let p = pairwise_token_f1(&masks)?;
        if p.pairs == 0 {
            skipped_all += 1;
        } else {
            f1s.push(p.f1);
        }
    }
    if !f1s.is_empty() || skipped_all > 0 {
        let value = if f1s.is_empty() { 1.0 } else { f1s.iter().sum::<f64>() / f1s.len() as f64 };
        out.push(report("Actor Identification", "Pairwise F1", value, f1s.len(), f1s.is_empty()));
    }

    if let Some(a) = categorical_alpha(labelings, Task::Stance) {
        let a = a?;
        out.push(report("Stance Classification", "Krippendorff's alpha", a.value, a.support, a.degenerate));
    }
    if let Some(a) = categorical_alpha(labelings, Task::PrimaryFrame) {
        let a = a?;
        out.push(report("Frame Assignment", "Krippendorff's alpha", a.value, a.support, a.degenerate));
    }

    let claims = by_article(labelings, Task::ClaimSpan);
    let mut per_article = Vec::new();
    for group in claims.values() {
        let spans: Vec<Vec<Span>> = masks_of(group).into_iter().map(mask_spans).collect();
        if spans.len() < 2 {
            continue;
        }
        let mut total = 0.0;
        let mut pairs = 0;
        for (i, gold) in spans.iter().enumerate() {
            for (j, pred) in spans.iter().enumerate() {
                if i != j {
                    total += span_f1(pred, gold, mode).f1;
                    pairs += 1;
                }
            }
        }
        per_article.push(total / pairs as f64);
    }
    if !per_article.is_empty() {
        let v = per_article.iter().sum::<f64>() / per_article.len() as f64;
        out.push(report("Claim Extraction", "Span-level F1 (macro)", v, per_article.len(), false));
    }

    let stance = by_article(labelings, Task::Stance);
    let labeled: Vec<Vec<Option<String>>> = stance
        .values()
        .map(|g| g.iter().map(|l| l.label.clone()).collect())
        .collect();
    if !labeled.is_empty() {
        let matrix = ReliabilityMatrix {
            units: labeled.iter().map(|u| u.clone()).collect(),
        };
        let counts = fleiss_counts(&matrix);
        if let Ok(k) = fleiss_kappa(&counts) {
            out.push(report("Stance Classification", "Fleiss' kappa", k.value, k.support, k.degenerate));
        }
    }

    let primary = by_article(labelings, Task::PrimaryFrame);
    let secondary = by_article(labelings, Task::SecondaryFrame);
    let mut jac = Vec::new();
    let mut all_degenerate = true;
    for (article, group) in &primary {
        let sets: Vec<BTreeSet<String>> = group
            .iter()
            .map(|l| {
                let mut s: BTreeSet<String> = l.label.iter().cloned().collect();
                if let Some(sec) = secondary
                    .get(article)
                    .and_then(|g| g.iter().find(|x| x.annotator_id == l.annotator_id))
                    .and_then(|x| x.label.clone())
                {
                    if sec != "none" {
                        s.insert(sec);
                    }
                }
                s
            })
            .collect();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                let (v, d) = jaccard_multilabel(&sets[i], &sets[j]);
                all_degenerate &= d;
                jac.push(v);
            }
        }
    }
    if !jac.is_empty() {
        let v = jac.iter().sum::<f64>() / jac.len() as f64;
        out.push(report("Frame Assignment (multi-label)", "Jaccard", v, jac.len(), all_degenerate));
    }
    Ok(out)
}

fn token_key(t: &str) -> String {
    t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// First occurrence of `phrase` in `tokens`, comparing tokens lowercased
/// with surrounding punctuation stripped.
pub fn locate_phrase(tokens: &[String], phrase: &str) -> Option<Span> {
    let needle: Vec<String> = crate::text::tokens(phrase)
        .into_iter()
        .map(token_key)
        .filter(|t| !t.is_empty())
        .collect();
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    let hay: Vec<String> = tokens.iter().map(|t| token_key(t)).collect();
    (0..=hay.len() - needle.len())
        .find(|&i| hay[i..i + needle.len()] == needle[..])
        .map(|i| Span::new(i, i + needle.len() - 1))
}

fn dedup_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort();
    spans.dedup();
    spans
}

/// Extraction records scored against consensus gold: actor and claim span
/// F1 (text located in the article's annotation tokens, macro over
/// articles), and accuracy of primary frame and article stance (majority
/// over the record's actors).
pub fn evaluate_against_gold(
    records: &[AfaRecord],
    gold: &[GoldRecord],
    articles: &[Article],
    mode: SpanMatchMode,
) -> Vec<MetricReport> {
    let gold_by: BTreeMap<&str, &GoldRecord> = gold.iter().map(|g| (g.article_id.as_str(), g)).collect();
    let art_by: BTreeMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut actor_f1 = Vec::new();
    let mut claim_f1 = Vec::new();
    let mut frame_hits = (0usize, 0usize);
    let mut stance_hits = (0usize, 0usize);
    let mut sorted: Vec<&AfaRecord> = records.iter().filter(|r| r.is_complete()).collect();
    sorted.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    for r in sorted {
        let (Some(g), Some(a)) = (gold_by.get(r.article_id.as_str()), art_by.get(r.article_id.as_str())) else {
            continue;
        };
        let tokens = crate::consensus::annotation_tokens(a);
        let gold_spans = |task: Task| -> Option<Vec<Span>> {
            g.spans
                .get(&task)
                .map(|v| v.iter().map(|s| Span::new(s.start_token, s.end_token)).collect())
        };
        let actors = r.actors.as_deref().unwrap_or_default();
        if let Some(gs) = gold_spans(Task::ActorSpan) {
            let pred = dedup_spans(actors.iter().filter_map(|x| locate_phrase(&tokens, &x.name)).collect());
            actor_f1.push(span_f1(&pred, &gs, mode).f1);
        }
        if let (Some(gs), Some(arg)) = (gold_spans(Task::ClaimSpan), &r.argument) {
            let pred: Vec<Span> = locate_phrase(&tokens, &arg.claim).into_iter().collect();
            claim_f1.push(span_f1(&pred, &gs, mode).f1);
        }
        if let (Some(gf), Some(f)) = (g.categorical.get(&Task::PrimaryFrame), &r.frame) {
            frame_hits.1 += 1;
            frame_hits.0 += usize::from(gf.label == f.primary_frame.as_str());
        }
        if let Some(gs) = g.categorical.get(&Task::Stance) {
            let labels: Vec<&str> = actors.iter().map(|x| x.stance.as_str()).collect();
            stance_hits.1 += 1;
            if let Some(v) = majority_vote(&labels) {
                stance_hits.0 += usize::from(v.label == gs.label);
            }
        }
    }
    let mut out = Vec::new();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if !actor_f1.is_empty() {
        out.push(report("Actor Identification", "Span F1 vs gold (macro)", mean(&actor_f1), actor_f1.len(), false));
    }
    if stance_hits.1 > 0 {
        let v = stance_hits.0 as f64 / stance_hits.1 as f64;
        out.push(report("Stance Classification", "Accuracy vs gold", v, stance_hits.1, false));
    }
    if frame_hits.1 > 0 {
        let v = frame_hits.0 as f64 / frame_hits.1 as f64;
        out.push(report("Frame Assignment", "Accuracy vs gold", v, frame_hits.1, false));
    }
    if !claim_f1.is_empty() {
        out.push(report("Claim Extraction", "Span F1 vs gold (macro)", mean(&claim_f1), claim_f1.len(), false));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[Option<&str>]]) -> ReliabilityMatrix {
        ReliabilityMatrix::new(
            rows.iter()
                .map(|r| r.iter().map(|c| c.map(String::from)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_perfect_and_hand_value() {
        let perfect = m(&[&[Some("A"), Some("A")], &[Some("B"), Some("B")]]);
        assert_eq!(krippendorff_alpha_nominal(&perfect).unwrap().value, 1.0);
        let mixed = m(&[
            &[Some("A"), Some("A")],
            &[Some("A"), Some("B")],
            &[Some("B"), Some("A")],
            &[Some("B"), Some("B")],
        ]);
        // o_AA = o_BB = o_AB = o_BA = 2, n = 8: 1 − (4/8) / (32/56) = 0.125
        assert!((krippendorff_alpha_nominal(&mixed).unwrap().value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn alpha_degenerate_and_errors() {
        let one = m(&[&[Some("A"), Some("A")], &[Some("A"), None]]);
        let a = krippendorff_alpha_nominal(&one).unwrap();
        assert!(a.degenerate && a.value == 1.0);
        let none = m(&[&[Some("A"), None]]);
        assert_eq!(krippendorff_alpha_nominal(&none), Err(AgreementError::NoPairableUnits));
        assert!(ReliabilityMatrix::new(vec![vec![Some("A".into())]]).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3]]).unwrap().value, 1.0);
        let single = fleiss_kappa(&[vec![3, 0], vec![3, 0]]).unwrap();
        assert!(single.degenerate && single.value == 1.0);
        // P̄ = (1 + 1 + 1/3 + 1/3)/4 = 2/3, P̄e = 1/2
        let k = fleiss_kappa(&[vec![3, 0], vec![0, 3], vec![2, 1], vec![1, 2]]).unwrap();
        assert!((k.value - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            fleiss_kappa(&[vec![3, 0], vec![1, 1]]),
            Err(AgreementError::UnequalRatings { unit: 1, .. })
        ));
    }

    #[test]
    fn token_f1_examples() {
        let a: &[u8] = &[1, 1, 0, 0];
        let b: &[u8] = &[0, 1, 1, 0];
        assert_eq!(pairwise_token_f1(&[a, b]).unwrap().f1, 0.5);
        assert_eq!(pairwise_token_f1(&[a, a]).unwrap().f1, 1.0);
        assert_eq!(pairwise_token_f1(&[a, &[0, 0, 1, 1]]).unwrap().f1, 0.0);
        let zero: &[u8] = &[0, 0, 0, 0];
        assert_eq!(pairwise_token_f1(&[a, zero]).unwrap().f1, 0.0);
        let both = pairwise_token_f1(&[zero, zero]).unwrap();
        assert_eq!((both.pairs, both.skipped_pairs), (0, 2));
    }

    #[test]
    fn span_f1_examples() {
        let g = [Span::new(0, 2), Span::new(4, 5)];
        let s = span_f1(&g, &g, SpanMatchMode::Exact);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let wide = [Span::new(0, 5)];
        let s = span_f1(&wide, &g, SpanMatchMode::OverlapF1);
        assert!(s.matched <= 1 && s.recall <= 0.5);
        assert_eq!(span_f1(&[], &[], SpanMatchMode::Exact).f1, 1.0);
        assert_eq!(span_f1(&[], &g, SpanMatchMode::Exact).f1, 0.0);
    }

    #[test]
    fn jaccard_examples() {
        let a: BTreeSet<&str> = ["economic_opportunity", "technological_solution"].into();
        let b: BTreeSet<&str> = ["economic_opportunity"].into();
        assert_eq!(jaccard_multilabel(&a, &b), (0.5, false));
        assert_eq!(jaccard_multilabel(&a, &a), (1.0, false));
        let c: BTreeSet<&str> = ["market_dynamics"].into();
        assert_eq!(jaccard_multilabel(&a, &c), (0.0, false));
        assert_eq!(jaccard_multilabel::<&str>(&BTreeSet::new(), &BTreeSet::new()), (1.0, true));
    }

    #[test]
    fn table2_layout() {
        let csv = table2_csv(&[MetricReport {
            component: "Stance".into(),
            metric: "Krippendorff's alpha".into(),
            value: 0.76,
            support: 10,
            degenerate: false,
        }]);
        assert_eq!(csv, "component,metric,value\nStance,Krippendorff's alpha,0.760\n");
    }

    fn lab(annotator: &str, article: &str, task: Task, mask: Option<&[u8]>, label: Option<&str>) -> AnnotatorLabeling {
        AnnotatorLabeling {
            annotator_id: annotator.into(),
            article_id: article.into(),
            task,
            token_mask: mask.map(<[u8]>::to_vec),
            label: label.map(String::from),
        }
    }

    #[test]
    fn iaa_report_rows() {
        let l = vec![
            lab("x", "a1", Task::ActorSpan, Some(&[1, 1, 0, 0]), None),
            lab("y", "a1", Task::ActorSpan, Some(&[0, 1, 1, 0]), None),
            lab("x", "a1", Task::Stance, None, Some("supportive")),
            lab("y", "a1", Task::Stance, None, Some("supportive")),
            lab("x", "a2", Task::Stance, None, Some("opposing")),
            lab("y", "a2", Task::Stance, None, Some("opposing")),
            lab("x", "a1", Task::ClaimSpan, Some(&[0, 1, 1, 0]), None),
            lab("y", "a1", Task::ClaimSpan, Some(&[0, 1, 1, 0]), None),
            lab("x", "a1", Task::PrimaryFrame, None, Some("economic_risk")),
            lab("y", "a1", Task::PrimaryFrame, None, Some("economic_risk")),
            lab("x", "a1", Task::SecondaryFrame, None, Some("market_dynamics")),
            lab("y", "a1", Task::SecondaryFrame, None, Some("none")),
        ];
        let r = iaa_report(&l, SpanMatchMode::Exact).unwrap();
        let get = |c: &str, m: &str| r.iter().find(|x| x.component == c && x.metric == m).unwrap();
        assert_eq!(get("Actor Identification", "Pairwise F1").value, 0.5);
        assert_eq!(get("Stance Classification", "Krippendorff's alpha").value, 1.0);
        assert!(get("Frame Assignment", "Krippendorff's alpha").degenerate);
        assert_eq!(get("Claim Extraction", "Span-level F1 (macro)").value, 1.0);
        assert_eq!(get("Stance Classification", "Fleiss' kappa").value, 1.0);
        assert_eq!(get("Frame Assignment (multi-label)", "Jaccard").value, 0.5);
        assert_eq!(r[0].component, "Actor Identification");
    }

    #[test]
    fn phrase_location() {
        let toks: Vec<String> = "BlackRock Inc. said, climate-focused portfolios will grow."
            .split_whitespace()
            .map(String::from)
            .collect();
        assert_eq!(locate_phrase(&toks, "blackrock inc"), Some(Span::new(0, 1)));
        assert_eq!(locate_phrase(&toks, "portfolios will grow"), Some(Span::new(4, 6)));
        assert_eq!(locate_phrase(&toks, "nothing here"), None);
    }

    /// Maximum one-to-one matching by exhaustive search over candidate
    /// edges with F1 ≥ 0.5.
    fn brute_max_matching(p: &[Span], g: &[Span]) -> usize {
        fn go(i: usize, p: &[Span], g: &[Span], used: &mut Vec<bool>) -> usize {
            if i == p.len() {
                return 0;
            }
            let mut best = go(i + 1, p, g, used);
            for j in 0..g.len() {
                if !used[j] {
                    let inter = {
                        let lo = p[i].start.max(g[j].start);
                        let hi = p[i].end.min(g[j].end);
                        if lo <= hi { hi - lo + 1 } else { 0 }
                    };
                    let f = 2.0 * inter as f64 / (p[i].len() + g[j].len()) as f64;
                    if f >= 0.5 {
                        used[j] = true;
                        best = best.max(1 + go(i + 1, p, g, used));
                        used[j] = false;
                    }
                }
            }
            best
        }
        go(0, p, g, &mut vec![false; g.len()])
    }

    fn spans_from_mask(mask: &[bool], cuts: &[bool]) -> Vec<Span> {
        // runs of true, additionally split where `cuts` is set
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for j in 0..mask.len() {
            if mask[j] {
                if start.is_some() && cuts[j] {
                    out.push(Span::new(start.unwrap(), j - 1));
                    start = Some(j);
                } else if start.is_none() {
                    start = Some(j);
                }
            } else if let Some(s) = start.take() {
                out.push(Span::new(s, j - 1));
            }
        }
        if let Some(s) = start {
            out.push(Span::new(s, mask.len() - 1));
        }
        out
    }

    proptest! {
        #[test]
        fn alpha_invariant_under_renaming_and_reordering(
            rows in proptest::collection::vec(proptest::collection::vec(proptest::option::of(0u8..3), 3), 2..8)
        ) {
            let to = |f: &dyn Fn(u8) -> String, rows: &Vec<Vec<Option<u8>>>| ReliabilityMatrix {
                units: rows.iter().map(|r| r.iter().map(|c| c.map(f)).collect()).collect(),
            };
            let base = to(&|v| format!("L{v}"), &rows);
            let renamed = to(&|v| format!("Z{}", 2 - v), &rows);
            let reordered: Vec<Vec<Option<u8>>> = rows.iter().map(|r| r.iter().rev().cloned().collect()).collect();
            let reordered = to(&|v| format!("L{v}"), &reordered);
            if let Ok(a) = krippendorff_alpha_nominal(&base) {
                prop_assert!(a.value <= 1.0 + 1e-12);
                prop_assert!((krippendorff_alpha_nominal(&renamed).unwrap().value - a.value).abs() < 1e-12);
                prop_assert!((krippendorff_alpha_nominal(&reordered).unwrap().value - a.value).abs() < 1e-12);
            }
        }

        #[test]
        fn token_f1_symmetric(a in proptest::collection::vec(0u8..=1, 1..30), seed in any::<u64>()) {
            let b: Vec<u8> = a.iter().enumerate().map(|(i, &x)| if (seed >> (i % 64)) & 1 == 1 { 1 - x } else { x }).collect();
            prop_assert_eq!(token_f1(&a, &b), token_f1(&b, &a));
        }

        #[test]
        fn greedy_overlap_matching(
            pm in proptest::collection::vec(any::<bool>(), 12),
            pc in proptest::collection::vec(any::<bool>(), 12),
            gm in proptest::collection::vec(any::<bool>(), 12),
            gc in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let p = spans_from_mask(&pm, &pc);
            let g = spans_from_mask(&gm, &gc);
            let greedy = match_spans(&p, &g, SpanMatchMode::OverlapF1);
            let opt = brute_max_matching(&p, &g);
            prop_assert!(greedy.len() <= opt);
            prop_assert!(2 * greedy.len() >= opt);
            // when no predicted span qualifies for two gold spans, any
            // maximal matching is maximum, so greedy must hit the optimum
            let single = p.iter().all(|x| g.iter().filter(|y| crate::consensus::span_f1(x, y) >= 0.5).count() <= 1);
            if single {
                prop_assert_eq!(greedy.len(), opt);
            }
        }
    }
}
