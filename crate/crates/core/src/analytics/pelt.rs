//! Exact penalized changepoint detection (PELT) over categorical count
//! series, with multinomial negative log-likelihood segment costs.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

pub const MIN_PERIODS: usize = 8;

/// Relative tolerance under which two segmentation costs count as equal;
/// ties go to fewer segments.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalTimeSeries {
    pub periods: Vec<String>,
    pub categories: Vec<String>,
    /// `counts[period][category]`.
    pub counts: Vec<Vec<u64>>,
}

impl CategoricalTimeSeries {
    pub fn new(periods: Vec<String>, categories: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, AnalyticsError> {
        let s = Self {
            periods,
            categories,
            counts,
        };
        s.check_shape()?;
        Ok(s)
    }

    pub fn check_shape(&self) -> Result<(), AnalyticsError> {
        if self.periods.len() != self.counts.len() {
            return Err(AnalyticsError::RaggedTable {
                row: self.counts.len(),
                expected: self.periods.len(),
                found: self.counts.len(),
            });
        }
        for (row, r) in self.counts.iter().enumerate() {
            if r.len() != self.categories.len() {
                return Err(AnalyticsError::RaggedTable {
                    row,
                    expected: self.categories.len(),
                    found: r.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Row proportions; rows with no counts are all zero.
    pub fn shares(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let t: u64 = r.iter().sum();
                r.iter()
                    .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `(categories − 1) · ln(total observations)`.
    Bic,
    Value(f64),
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Bic
    }
}

impl Penalty {
    pub fn resolve(self, series: &CategoricalTimeSeries) -> f64 {
        match self {
            Penalty::Bic => (series.categories.len().saturating_sub(1)) as f64 * (series.total() as f64).ln(),
            Penalty::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// First period index.
    pub start: usize,
    /// One past the last period index.
    pub end: usize,
    pub distribution: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointResult {
    /// Indices where a new segment starts; strictly increasing, in `1..n`.
    pub changepoints: Vec<usize>,
    /// Period labels at those indices.
    pub changepoint_periods: Vec<String>,
    pub segments: Vec<Segment>,
    pub penalty: f64,
    /// Segment costs plus `penalty · segments`.
    pub total_cost: f64,
}

/// Prefix sums of category counts for O(categories) segment costs.
pub struct SegmentCost {
    prefix: Vec<Vec<u64>>,
}

impl SegmentCost {
    pub fn new(counts: &[Vec<u64>]) -> Self {
        let k = counts.first().map_or(0, Vec::len);
        let mut prefix = vec![vec![0u64; k]];
        for row in counts {
            let last = prefix.last().expect("seeded with a zero row");
            prefix.push(last.iter().zip(row).map(|(a, b)| a + b).collect());
        }
        Self { prefix }
    }

    pub fn pooled(&self, start: usize, end: usize) -> Vec<u64> {
        self.prefix[end].iter().zip(&self.prefix[start]).map(|(a, b)| a - b).collect()
    }

    /// Multinomial NLL of periods `start..end` under their pooled
    /// maximum-likelihood distribution: `−Σ c_j ln(c_j / n)`.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        let pooled = self.pooled(start, end);
        let n: u64 = pooled.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        -pooled
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| c as f64 * (c as f64 / n).ln())
            .sum::<f64>()
    }
}

fn tol(x: f64) -> f64 {
    TIE_TOL * x.abs().max(1.0)
}

/// `(value, segments)` ordering with a relative tolerance on value.
fn better(v: f64, segs: usize, best_v: f64, best_segs: usize) -> bool {
    if v < best_v - tol(best_v) {
        true
    } else if v <= best_v + tol(best_v) {
        segs < best_segs
    } else {
        false
    }
}

fn validate(series: &CategoricalTimeSeries) -> Result<(), AnalyticsError> {
    series.check_shape()?;
    if series.len() < MIN_PERIODS {
        return Err(AnalyticsError::SeriesTooShort {
            periods: series.len(),
            min: MIN_PERIODS,
        });
    }
    if let Some(i) = series.counts.iter().position(|r| r.iter().all(|&c| c == 0)) {
        return Err(AnalyticsError::EmptyPeriod(series.periods[i].clone()));
    }
    Ok(())
}

pub(crate) fn result_from_breaks(
    series: &CategoricalTimeSeries,
    cost: &SegmentCost,
    changepoints: Vec<usize>,
    penalty: f64,
) -> ChangepointResult {
    let bounds: Vec<usize> = std::iter::once(0)
        .chain(changepoints.iter().copied())
        .chain(std::iter::once(series.len()))
        .collect();
    let segments: Vec<Segment> = bounds
        .windows(2)
        .map(|w| {
            let pooled = cost.pooled(w[0], w[1]);
            let n: u64 = pooled.iter().sum();
            Segment {
                start: w[0],
                end: w[1],
                distribution: pooled.iter().map(|&c| c as f64 / n as f64).collect(),
                cost: cost.cost(w[0], w[1]),
            }
        })
        .collect();
    let total_cost = segments.iter().map(|s| s.cost).sum::<f64>() + penalty * segments.len() as f64;
    ChangepointResult {
        changepoint_periods: changepoints.iter().map(|&i| series.periods[i].clone()).collect(),
        changepoints,
        segments,
        penalty,
        total_cost,
    }
}

/// Optimal segmentation minimizing `Σ cost + penalty · segments`. Costs
/// equal within a relative 1e-9 are broken toward fewer segments.
pub fn pelt_changepoints(series: &CategoricalTimeSeries, penalty: Penalty) -> Result<ChangepointResult, AnalyticsError> {
    validate(series)?;
    let beta = penalty.resolve(series);
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(AnalyticsError::BadPenalty(beta));
    }
    let n = series.len();
    let cost = SegmentCost::new(&series.counts);
    // f[t]: optimal cost of the first t periods, with F(0) = −β so that
    // every segment, including the first, pays β.
    let mut f = vec![0.0f64; n + 1];
    let mut segs = vec![0usize; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -beta;
    let mut candidates: Vec<usize> = vec![0];
    for t in 1..=n {
        let mut best = (f64::INFINITY, usize::MAX, 0usize);
        let mut seg_costs = Vec::with_capacity(candidates.len());
        for &s in &candidates {
            let c = cost.cost(s, t);
            seg_costs.push(c);
            let v = f[s] + c + beta;
            if better(v, segs[s] + 1, best.0, best.1) {
                best = (v, segs[s] + 1, s);
            }
        }
        f[t] = best.0;
        segs[t] = best.1;
        last[t] = best.2;
        // prune s when F(s) + C(s, t) > F(t); pooling never lowers the
        // multinomial NLL, so such s cannot be optimal later (K = 0)
        let kept: Vec<usize> = candidates
            .iter()
            .zip(&seg_costs)
            .filter(|(&s, &c)| f[s] + c <= f[t] + tol(f[t]))
            .map(|(&s, _)| s)
            .collect();
        candidates = kept;
        candidates.push(t);
    }
    let mut changepoints = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = last[t];
        if s > 0 {
            changepoints.push(s);
        }
        t = s;
    }
    changepoints.reverse();
    Ok(result_from_breaks(series, &cost, changepoints, beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub penalty: f64,
    pub changepoints: Vec<usize>,
}

/// Changepoints at each penalty, for judging how robust a break is.
pub fn penalty_sweep(series: &CategoricalTimeSeries, penalties: &[f64]) -> Result<Vec<SweepPoint>, AnalyticsError> {
    penalties
        .iter()
        .map(|&p| {
            pelt_changepoints(series, Penalty::Value(p)).map(|r| SweepPoint {
                penalty: p,
                changepoints: r.changepoints,
            })
        })
        .collect()
}

/// `count` penalties spaced evenly from 0 to twice the BIC penalty.
pub fn default_sweep(series: &CategoricalTimeSeries, count: usize) -> Vec<f64> {
    let top = 2.0 * Penalty::Bic.resolve(series);
    if count < 2 {
        return vec![top / 2.0];
    }
    (0..count).map(|i| top * i as f64 / (count - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(counts: Vec<Vec<u64>>) -> CategoricalTimeSeries {
        let n = counts.len();
        let k = counts[0].len();
        CategoricalTimeSeries::new(
            (0..n).map(|i| format!("p{i}")).collect(),
            (0..k).map(|j| format!("c{j}")).collect(),
            counts,
        )
        .unwrap()
    }

    /// Multinomial NLL computed directly from the segment's rows.
    fn nll(rows: &[Vec<u64>]) -> f64 {
        let k = rows[0].len();
        let pooled: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j] as f64).sum()).collect();
        let n: f64 = pooled.iter().sum();
        pooled.iter().filter(|&&c| c > 0.0).map(|&c| -c * (c / n).ln()).sum()
    }

    /// Every subset of the n − 1 interior boundaries; ties toward fewer
    /// segments.
    fn brute(counts: &[Vec<u64>], beta: f64) -> (f64, Vec<usize>) {
        let n = counts.len();
        let mut best = (f64::INFINITY, usize::MAX, Vec::new());
        for mask in 0u32..(1 << (n - 1)) {
            let breaks: Vec<usize> = (1..n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let mut bounds = vec![0];
            bounds.extend(&breaks);
            bounds.push(n);
            let v: f64 = bounds.windows(2).map(|w| nll(&counts[w[0]..w[1]]) + beta).sum();
            if better(v, breaks.len() + 1, best.0, best.1) {
                best = (v, breaks.len() + 1, breaks);
            }
        }
        (best.0, best.2)
    }

    fn two_regime(seed: u64) -> Vec<Vec<u64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = [0.6, 0.2, 0.1, 0.1];
        let p2 = [0.1, 0.2, 0.2, 0.5];
        (0..20)
            .map(|t| {
                let p = if t < 10 { &p1 } else { &p2 };
                let mut row = vec![0u64; 4];
                for _ in 0..50 {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut j = 3;
                    for (i, &pi) in p.iter().enumerate() {
                        acc += pi;
                        if u < acc {
                            j = i;
                            break;
                        }
                    }
                    row[j] += 1;
                }
                row
            })
            .collect()
    }

    #[test]
    fn cost_matches_direct_nll() {
        let c = vec![vec![3, 1], vec![0, 4], vec![2, 2]];
        let sc = SegmentCost::new(&c);
        assert!((sc.cost(0, 3) - nll(&c)).abs() < 1e-12);
        assert!((sc.cost(1, 2) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_never_breaks() {
        let s = series(vec![vec![5, 3, 2]; 12]);
        for p in default_sweep(&s, 10) {
            assert!(pelt_changepoints(&s, Penalty::Value(p)).unwrap().changepoints.is_empty(), "penalty {p}");
        }
    }

    #[test]
    fn planted_break_recovered() {
        let s = series(two_regime(3));
        let r = pelt_changepoints(&s, Penalty::Bic).unwrap();
        assert_eq!(r.changepoints.len(), 1);
        assert!((9..=11).contains(&r.changepoints[0]));
        let (bv, bb) = brute(&s.counts, r.penalty);
        assert_eq!(r.changepoints, bb);
        assert!((r.total_cost - bv).abs() < 1e-9 * bv.abs().max(1.0));
    }

    #[test]
    fn too_short_and_empty_period() {
        assert!(matches!(
            pelt_changepoints(&series(vec![vec![1, 1]; 7]), Penalty::Bic),
            Err(AnalyticsError::SeriesTooShort { periods: 7, .. })
        ));
        let mut c = vec![vec![1, 1]; 9];
        c[4] = vec![0, 0];
        assert!(matches!(
            pelt_changepoints(&series(c), Penalty::Bic),
            Err(AnalyticsError::EmptyPeriod(p)) if p == "p4"
        ));
    }

    #[test]
    fn segments_describe_the_split() {
        let mut c = vec![vec![9, 1]; 8];
        c.extend(vec![vec![1, 9]; 8]);
        let r = pelt_changepoints(&series(c), Penalty::Value(2.0)).unwrap();
        assert_eq!(r.changepoints, vec![8]);
        assert_eq!(r.changepoint_periods, vec!["p8"]);
        assert_eq!(r.segments.len(), 2);
        assert!((r.segments[0].distribution[0] - 0.9).abs() < 1e-12);
    }

    fn arb_series() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (8usize..=12, 2usize..=4).prop_flat_map(|(n, k)| proptest::collection::vec(proptest::collection::vec(0u64..20, k), n))
            .prop_map(|mut c| {
                for row in &mut c {
                    row[0] += 1;
                }
                c
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn equals_exhaustive_search(c in arb_series(), beta in 0.0f64..15.0) {
            let s = series(c);
            let r = pelt_changepoints(&s, Penalty::Value(beta)).unwrap();
            let (bv, bb) = brute(&s.counts, beta);
            prop_assert!((r.total_cost - bv).abs() <= 1e-9 * bv.abs().max(1.0));
            prop_assert_eq!(r.changepoints, bb);
        }

        #[test]
        fn breaks_monotone_in_penalty(c in arb_series()) {
            let s = series(c);
            let sweep = penalty_sweep(&s, &default_sweep(&s, 10)).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[1].changepoints.len() <= w[0].changepoints.len());
            }
        }
    }
}
