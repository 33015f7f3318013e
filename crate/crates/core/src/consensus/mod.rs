//! Gold labels from several annotators: majority vote for categorical
//! tasks, token agreement plus span reconstruction for span tasks.

mod zooniverse;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use zooniverse::{import_zooniverse_csv, ZooniverseError};

use crate::corpus::Article;
use crate::extraction::{Frame, Stance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ActorSpan,
    ClaimSpan,
    EvidenceSpan,
    WarrantSpan,
    Stance,
    PrimaryFrame,
    SecondaryFrame,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::ActorSpan,
        Task::ClaimSpan,
        Task::EvidenceSpan,
        Task::WarrantSpan,
        Task::Stance,
        Task::PrimaryFrame,
        Task::SecondaryFrame,
    ];

    pub fn is_span(self) -> bool {
        matches!(
            self,
            Task::ActorSpan | Task::ClaimSpan | Task::EvidenceSpan | Task::WarrantSpan
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::ActorSpan => "actor_span",
            Task::ClaimSpan => "claim_span",
            Task::EvidenceSpan => "evidence_span",
            Task::WarrantSpan => "warrant_span",
            Task::Stance => "stance",
            Task::PrimaryFrame => "primary_frame",
            Task::SecondaryFrame => "secondary_frame",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Whether `label` belongs to this categorical task's label set.
    /// Secondary frames also accept `none`.
    pub fn accepts_label(self, label: &str) -> bool {
        match self {
            Task::Stance => Stance::parse(label).is_some(),
            Task::PrimaryFrame => Frame::parse(label).is_some(),
            Task::SecondaryFrame => label == "none" || Frame::parse(label).is_some(),
            _ => false,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotator's work on one (article, task): a 0/1 token mask for span
/// tasks or a label for categorical ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorLabeling {
    pub annotator_id: String,
    pub article_id: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_mask: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }

    pub fn hull(&self, other: &Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

/// `2·|H ∩ S| / (|H| + |S|)` over token sets.
pub fn span_f1(h: &Span, s: &Span) -> f64 {
    2.0 * h.overlap(s) as f64 / (h.len() + s.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSpan {
    pub start_token: usize,
    /// Inclusive.
    pub end_token: usize,
    pub task: Task,
    /// Mean token agreement over the span.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalGold {
    pub label: String,
    pub vote_share: f64,
    pub tie_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub article_id: String,
    pub spans: BTreeMap<Task, Vec<ConsensusSpan>>,
    pub categorical: BTreeMap<Task, CategoricalGold>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConsensusError {
    #[error("need at least 2 labelings, got {0}")]
    TooFewLabelings(usize),
    #[error("{article_id}/{task}: mask of annotator `{annotator_id}` has length {found}, expected {expected}")]
    MaskLengthMismatch {
        article_id: String,
        task: Task,
        annotator_id: String,
        expected: usize,
        found: usize,
    },
    #[error("labelings mix articles or tasks")]
    MixedGroup,
    #[error("{article_id}/{task}: annotator `{annotator_id}` gave a mask value other than 0/1")]
    NotBinary {
        article_id: String,
        task: Task,
        annotator_id: String,
    },
    #[error("{article_id}/{task}: annotator `{annotator_id}` gave no token mask")]
    MissingMask {
        article_id: String,
        task: Task,
        annotator_id: String,
    },
    #[error("{article_id}/{task}: annotator `{annotator_id}` gave no label")]
    MissingLabel {
        article_id: String,
        task: Task,
        annotator_id: String,
    },
    #[error("{article_id}/{task}: label `{label}` is not valid for the task")]
    BadLabel {
        article_id: String,
        task: Task,
        label: String,
    },
    #[error("tau must lie in (0, 1], got {0}")]
    BadTau(f64),
}

/// Tokens used for annotation masks: whitespace split of the article's
/// normalized full text.
pub fn annotation_tokens(article: &Article) -> Vec<String> {
    crate::text::tokens(&article.full_text()).into_iter().map(String::from).collect()
}

/// `A(t_j)`: fraction of masks marking each token.
pub fn agreement_from_masks(masks: &[&[u8]]) -> Vec<f64> {
    let Some(first) = masks.first() else {
        return Vec::new();
    };
    let n = masks.len() as f64;
    (0..first.len())
        .map(|j| masks.iter().filter(|m| m[j] == 1).count() as f64 / n)
        .collect()
}

fn checked_masks(labelings: &[AnnotatorLabeling]) -> Result<Vec<&[u8]>, ConsensusError> {
    if labelings.len() < 2 {
        return Err(ConsensusError::TooFewLabelings(labelings.len()));
    }
    let (article, task) = (&labelings[0].article_id, labelings[0].task);
    let mut masks = Vec::with_capacity(labelings.len());
    for l in labelings {
        if &l.article_id != article || l.task != task {
            return Err(ConsensusError::MixedGroup);
        }
        let m = l.token_mask.as_deref().ok_or_else(|| ConsensusError::MissingMask {
            article_id: l.article_id.clone(),
            task,
            annotator_id: l.annotator_id.clone(),
        })?;
        if m.iter().any(|&v| v > 1) {
            return Err(ConsensusError::NotBinary {
                article_id: l.article_id.clone(),
                task,
                annotator_id: l.annotator_id.clone(),
            });
        }
        if let Some(first) = masks.first() {
            let first: &&[u8] = first;
            if m.len() != first.len() {
                return Err(ConsensusError::MaskLengthMismatch {
                    article_id: l.article_id.clone(),
                    task,
                    annotator_id: l.annotator_id.clone(),
                    expected: first.len(),
                    found: m.len(),
                });
            }
        }
        masks.push(m);
    }
    Ok(masks)
}

/// Token agreement for labelings of one (article, task).
pub fn token_agreement(labelings: &[AnnotatorLabeling]) -> Result<Vec<f64>, ConsensusError> {
    Ok(agreement_from_masks(&checked_masks(labelings)?))
}

/// Maximal runs of 1s in a mask.
pub fn mask_spans(mask: &[u8]) -> Vec<Span> {
    runs(mask.iter().map(|&v| v == 1))
}

fn runs(keep: impl Iterator<Item = bool>) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    let mut last = 0;
    for (j, k) in keep.enumerate() {
        match (k, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                out.push(Span::new(s, j - 1));
                start = None;
            }
            _ => {}
        }
        last = j;
    }
    if let Some(s) = start {
        out.push(Span::new(s, last));
    }
    out
}

/// Maximal runs of tokens with `A(t_j) ≥ tau`.
pub fn reconstruct_spans(agreement: &[f64], tau: f64) -> Result<Vec<Span>, ConsensusError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(ConsensusError::BadTau(tau));
    }
    Ok(runs(agreement.iter().map(|&a| a >= tau)))
}

pub fn support(agreement: &[f64], span: &Span) -> f64 {
    let s = &agreement[span.start..=span.end];
    s.iter().sum::<f64>() / s.len() as f64
}

fn coalesce(spans: &mut Vec<Span>) {
    spans.sort();
    let mut out: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans.drain(..) {
        match out.last_mut() {
            Some(last) if last.overlap(&s) > 0 => *last = last.hull(&s),
            _ => out.push(s),
        }
    }
    *spans = out;
}

/// Widens consensus spans by maximal coverage. Each pass compares every
/// human span `H` with the current consensus spans; each `S` becomes the
/// hull of itself and every `H` with `F1(H, S) > f1_threshold`, and
/// overlapping results are fused. Passes repeat until nothing changes, so
/// the result does not depend on the order of the human spans. Human spans
/// that match nothing are not added.
pub fn merge_with_human_spans(human: &[Span], consensus: &[Span], f1_threshold: f64) -> Vec<Span> {
    let mut spans: Vec<Span> = consensus.to_vec();
    coalesce(&mut spans);
    loop {
        let mut next: Vec<Span> = spans
            .iter()
            .map(|s| {
                human
                    .iter()
                    .filter(|h| span_f1(h, s) > f1_threshold)
                    .fold(*s, |acc, h| acc.hull(h))
            })
            .collect();
        coalesce(&mut next);
        if next == spans {
            return spans;
        }
        spans = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub tau: f64,
    pub f1_threshold: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            f1_threshold: 0.7,
        }
    }
}

/// Full span pipeline for one (article, task): agreement, reconstruction,
/// then merging with every annotator's spans.
pub fn consensus_spans(
    labelings: &[AnnotatorLabeling],
    config: ConsensusConfig,
) -> Result<Vec<ConsensusSpan>, ConsensusError> {
    let masks = checked_masks(labelings)?;
    let agreement = agreement_from_masks(&masks);
    let base = reconstruct_spans(&agreement, config.tau)?;
    let human: Vec<Span> = masks.iter().flat_map(|m| mask_spans(m)).collect();
    let task = labelings[0].task;
    Ok(merge_with_human_spans(&human, &base, config.f1_threshold)
        .into_iter()
        .map(|s| ConsensusSpan {
            start_token: s.start,
            end_token: s.end,
            task,
            support: support(&agreement, &s),
        })
        .collect())
}

/// Most frequent label; ties go to the lexicographically smallest label and
/// set `tie_flag`. Returns `None` for an empty list.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Option<CategoricalGold> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let top = *counts.values().max()?;
    let mut winners = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l);
    let label = winners.next()?.to_string();
    Some(CategoricalGold {
        label,
        vote_share: top as f64 / labels.len() as f64,
        tie_flag: winners.next().is_some(),
    })
}

/// Groups labelings by article and task and derives one gold record per
/// article, in article-id order.
pub fn build_gold(
    labelings: &[AnnotatorLabeling],
    config: ConsensusConfig,
) -> Result<Vec<GoldRecord>, ConsensusError> {
    let mut groups: BTreeMap<(&str, Task), Vec<AnnotatorLabeling>> = BTreeMap::new();
    for l in labelings {
        groups.entry((&l.article_id, l.task)).or_default().push(l.clone());
    }
    let mut records: BTreeMap<String, GoldRecord> = BTreeMap::new();
    for ((article_id, task), group) in groups {
        let rec = records.entry(article_id.to_string()).or_insert_with(|| GoldRecord {
            article_id: article_id.to_string(),
            spans: BTreeMap::new(),
            categorical: BTreeMap::new(),
        });
        if task.is_span() {
            rec.spans.insert(task, consensus_spans(&group, config)?);
            continue;
        }
        let mut labels = Vec::with_capacity(group.len());
        for l in &group {
            let label = l.label.as_deref().ok_or_else(|| ConsensusError::MissingLabel {
                article_id: l.article_id.clone(),
                task,
                annotator_id: l.annotator_id.clone(),
            })?;
            if !task.accepts_label(label) {
                return Err(ConsensusError::BadLabel {
                    article_id: l.article_id.clone(),
                    task,
                    label: label.to_string(),
                });
            }
            labels.push(label);
        }
        if let Some(vote) = majority_vote(&labels) {
            rec.categorical.insert(task, vote);
        }
    }
    Ok(records.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lab(annotator: &str, mask: &[u8]) -> AnnotatorLabeling {
        AnnotatorLabeling {
            annotator_id: annotator.into(),
            article_id: "a".into(),
            task: Task::ActorSpan,
            token_mask: Some(mask.to_vec()),
            label: None,
        }
    }

    fn mask(n: usize, spans: &[(usize, usize)]) -> Vec<u8> {
        let mut m = vec![0u8; n];
        for &(s, e) in spans {
            m[s..=e].iter_mut().for_each(|x| *x = 1);
        }
        m
    }

    /// Tokens: BlackRock Inc. stated that climate-focused portfolios will
    /// drive growth.
    fn blackrock() -> Vec<AnnotatorLabeling> {
        vec![
            lab("A1", &mask(9, &[(0, 0), (4, 8)])),
            lab("A2", &mask(9, &[(0, 1), (4, 8)])),
            lab("A3", &mask(9, &[(0, 0), (5, 8)])),
        ]
    }

    #[test]
    fn blackrock_agreement() {
        let a = token_agreement(&blackrock()).unwrap();
        let third = 1.0 / 3.0;
        let want = [1.0, third, 0.0, 0.0, 2.0 * third, 1.0, 1.0, 1.0, 1.0];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn blackrock_consensus_spans() {
        let spans = consensus_spans(&blackrock(), ConsensusConfig::default()).unwrap();
        let ranges: Vec<(usize, usize)> = spans.iter().map(|s| (s.start_token, s.end_token)).collect();
        assert_eq!(ranges, [(0, 0), (4, 8)]);
        assert!((spans[1].support - (2.0 / 3.0 + 4.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn agreement_ratios() {
        let labs: Vec<_> = (0..5)
            .map(|i| lab(&format!("x{i}"), &[u8::from(i < 3), 1]))
            .collect();
        let a = token_agreement(&labs).unwrap();
        assert_eq!(a, [0.6, 1.0]);
    }

    #[test]
    fn mask_length_mismatch() {
        let e = token_agreement(&[lab("x", &[1, 0]), lab("y", &[1])]).unwrap_err();
        assert!(matches!(e, ConsensusError::MaskLengthMismatch { expected: 2, found: 1, .. }));
    }

    #[test]
    fn reconstruct_examples() {
        assert!(reconstruct_spans(&[0.0; 5], 0.5).unwrap().is_empty());
        assert_eq!(
            reconstruct_spans(&[1.0, 1.0, 0.0, 1.0], 0.5).unwrap(),
            [Span::new(0, 1), Span::new(3, 3)]
        );
        assert!(reconstruct_spans(&[1.0], 0.0).is_err());
    }

    #[test]
    fn merge_examples() {
        let h = Span::new(2, 7);
        assert_eq!(merge_with_human_spans(&[h], &[h], 0.7), [h]);
        // 6-token human span vs its last 4 tokens: F1 = 0.8
        let s = Span::new(4, 7);
        assert!((span_f1(&h, &s) - 0.8).abs() < 1e-12);
        assert_eq!(merge_with_human_spans(&[h], &[s], 0.7), [h]);
        assert_eq!(merge_with_human_spans(&[Span::new(0, 1)], &[s], 0.7), [s]);
        // BlackRock check: F1([0,1], [0,0]) = 2/3 does not merge
        assert_eq!(
            merge_with_human_spans(&[Span::new(0, 1)], &[Span::new(0, 0)], 0.7),
            [Span::new(0, 0)]
        );
    }

    #[test]
    fn majority_examples() {
        let v = majority_vote(&["supportive", "supportive", "opposing"]).unwrap();
        assert_eq!(v.label, "supportive");
        assert!((v.vote_share - 2.0 / 3.0).abs() < 1e-12);
        assert!(!v.tie_flag);
        let v = majority_vote(&["neutral", "mixed"]).unwrap();
        assert_eq!(v.label, "mixed");
        assert!(v.tie_flag);
        let labels = ["economic_opportunity", "economic_risk", "economic_opportunity", "market_dynamics", "economic_opportunity"];
        let v = majority_vote(&labels).unwrap();
        assert_eq!(v.label, "economic_opportunity");
        assert!((v.vote_share - 0.6).abs() < 1e-12);
        assert!(majority_vote::<&str>(&[]).is_none());
    }

    #[test]
    fn gold_records_group_by_article() {
        let mut labs = blackrock();
        for (i, s) in ["supportive", "supportive", "neutral"].iter().enumerate() {
            labs.push(AnnotatorLabeling {
                annotator_id: format!("A{}", i + 1),
                article_id: "a".into(),
                task: Task::Stance,
                token_mask: None,
                label: Some(s.to_string()),
            });
        }
        let gold = build_gold(&labs, ConsensusConfig::default()).unwrap();
        assert_eq!(gold.len(), 1);
        assert_eq!(gold[0].spans[&Task::ActorSpan].len(), 2);
        assert_eq!(gold[0].categorical[&Task::Stance].label, "supportive");
        labs.push(AnnotatorLabeling {
            annotator_id: "A4".into(),
            article_id: "a".into(),
            task: Task::Stance,
            token_mask: None,
            label: Some("happy".into()),
        });
        assert!(matches!(
            build_gold(&labs, ConsensusConfig::default()),
            Err(ConsensusError::BadLabel { .. })
        ));
    }

    fn masks_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
        (1usize..30, 2usize..6).prop_flat_map(|(len, n)| {
            proptest::collection::vec(proptest::collection::vec(0u8..=1, len), n)
        })
    }

    proptest! {
        #[test]
        fn spans_cover_exactly_the_retained_tokens(masks in masks_strategy(), tau in 0.05f64..=1.0) {
            let refs: Vec<&[u8]> = masks.iter().map(Vec::as_slice).collect();
            let a = agreement_from_masks(&refs);
            let spans = reconstruct_spans(&a, tau).unwrap();
            let mut covered = vec![false; a.len()];
            for w in spans.windows(2) {
                prop_assert!(w[0].end + 1 < w[1].start);
            }
            for s in &spans {
                for j in s.start..=s.end {
                    covered[j] = true;
                }
            }
            for (j, &c) in covered.iter().enumerate() {
                prop_assert_eq!(c, a[j] >= tau);
            }
        }

        #[test]
        fn raising_tau_never_grows_coverage(masks in masks_strategy(), t1 in 0.05f64..=1.0, t2 in 0.05f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let refs: Vec<&[u8]> = masks.iter().map(Vec::as_slice).collect();
            let a = agreement_from_masks(&refs);
            let wide = reconstruct_spans(&a, lo).unwrap();
            let narrow = reconstruct_spans(&a, hi).unwrap();
            for n in &narrow {
                prop_assert!(wide.iter().any(|w| w.start <= n.start && n.end <= w.end));
            }
        }

        #[test]
        fn identical_masks_reproduce_annotator_spans(m in proptest::collection::vec(0u8..=1, 1..40), n in 2usize..7, tau in 0.05f64..=1.0) {
            let labs: Vec<_> = (0..n).map(|i| lab(&format!("x{i}"), &m)).collect();
            let got: Vec<Span> = consensus_spans(&labs, ConsensusConfig { tau, f1_threshold: 0.7 })
                .unwrap()
                .into_iter()
                .map(|s| Span::new(s.start_token, s.end_token))
                .collect();
            prop_assert_eq!(got, mask_spans(&m));
        }

        #[test]
        fn merge_idempotent_and_never_shrinks(masks in masks_strategy(), tau in 0.05f64..=1.0) {
            let refs: Vec<&[u8]> = masks.iter().map(Vec::as_slice).collect();
            let a = agreement_from_masks(&refs);
            let base = reconstruct_spans(&a, tau).unwrap();
            let human: Vec<Span> = refs.iter().flat_map(|m| mask_spans(m)).collect();
            let merged = merge_with_human_spans(&human, &base, 0.7);
            prop_assert_eq!(merge_with_human_spans(&human, &merged, 0.7), merged.clone());
            for b in &base {
                prop_assert!(merged.iter().any(|m| m.start <= b.start && b.end <= m.end));
            }
        }

        #[test]
        fn merge_ignores_human_span_order(masks in masks_strategy(), tau in 0.05f64..=1.0, rot in 0usize..16) {
            let refs: Vec<&[u8]> = masks.iter().map(Vec::as_slice).collect();
            let base = reconstruct_spans(&agreement_from_masks(&refs), tau).unwrap();
            let human: Vec<Span> = refs.iter().flat_map(|m| mask_spans(m)).collect();
            let mut shuffled: Vec<Span> = human.iter().rev().copied().collect();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
            }
            prop_assert_eq!(merge_with_human_spans(&human, &base, 0.7), merge_with_human_spans(&shuffled, &base, 0.7));
        }
    }
}
