//! Count tables, share series and complexity summaries built from
//! extraction records, plus their CSV layouts.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use super::chi::{chi_square_independence, Correction, ResidualMatrix, Significance};
use super::pelt::CategoricalTimeSeries;
use super::AnalyticsError;
use crate::extraction::{ActorType, AfaRecord, Frame};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl LabeledTable {
    /// Drops all-zero rows and columns so the χ² margins are positive.
    pub fn trimmed(&self) -> LabeledTable {
        let keep_r: Vec<usize> = (0..self.rows.len()).filter(|&i| self.counts[i].iter().any(|&c| c > 0)).collect();
        let keep_c: Vec<usize> = (0..self.cols.len())
            .filter(|&j| self.counts.iter().any(|r| r[j] > 0))
            .collect();
        LabeledTable {
            rows: keep_r.iter().map(|&i| self.rows[i].clone()).collect(),
            cols: keep_c.iter().map(|&j| self.cols[j].clone()).collect(),
            counts: keep_r
                .iter()
                .map(|&i| keep_c.iter().map(|&j| self.counts[i][j]).collect())
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().flatten().all(|&c| c == 0)
    }
}

/// Actor mentions cross-tabulated against the record's primary frame.
pub fn actor_frame_table(records: &[AfaRecord]) -> LabeledTable {
    let mut counts = vec![vec![0u64; Frame::ALL.len()]; ActorType::ALL.len()];
    for r in records {
        let (Some(actors), Some(frame)) = (&r.actors, &r.frame) else {
            continue;
        };
        let j = frame_index(frame.primary_frame);
        for a in actors {
            counts[actor_index(a.actor_type)][j] += 1;
        }
    }
    LabeledTable {
        rows: ActorType::ALL.iter().map(|a| a.as_str().to_string()).collect(),
        cols: Frame::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        counts,
    }
}

fn actor_index(a: ActorType) -> usize {
    ActorType::ALL.iter().position(|&x| x == a).expect("ALL lists every variant")
}

fn frame_index(f: Frame) -> usize {
    Frame::ALL.iter().position(|&x| x == f).expect("ALL lists every variant")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareSeries {
    /// Actor-mention counts per stratum, categories in canonical actor order.
    pub series: CategoricalTimeSeries,
    /// Row proportions (each row sums to 1, or is all zero when empty).
    pub shares: Vec<Vec<f64>>,
    /// Strata with no actor mentions.
    pub empty_periods: Vec<String>,
}

/// Actor-type shares of actor mentions per stratum. `assignment` maps
/// article ids to stratum labels; `strata` fixes the row order.
pub fn actor_share_series(
    records: &[AfaRecord],
    assignment: &BTreeMap<String, String>,
    strata: &[String],
) -> ShareSeries {
    let index: BTreeMap<&str, usize> = strata.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut counts = vec![vec![0u64; ActorType::ALL.len()]; strata.len()];
    for r in records {
        let Some(actors) = &r.actors else { continue };
        let Some(&row) = assignment.get(&r.article_id).and_then(|s| index.get(s.as_str())) else {
            continue;
        };
        for a in actors {
            counts[row][actor_index(a.actor_type)] += 1;
        }
    }
    let series = CategoricalTimeSeries {
        periods: strata.to_vec(),
        categories: ActorType::ALL.iter().map(|a| a.as_str().to_string()).collect(),
        counts,
    };
    let empty_periods = series
        .counts
        .iter()
        .zip(&series.periods)
        .filter(|(r, _)| r.iter().all(|&c| c == 0))
        .map(|(_, p)| p.clone())
        .collect();
    ShareSeries {
        shares: series.shares(),
        series,
        empty_periods,
    }
}

/// `YYYYQn` for a timestamp.
pub fn quarter_label(t: &DateTime<Utc>) -> String {
    format!("{}Q{}", t.year(), (t.month() - 1) / 3 + 1)
}

fn quarter_key(t: &DateTime<Utc>) -> i32 {
    t.year() * 4 + (t.month0() / 3) as i32
}

/// Primary-frame counts per calendar quarter. Quarters between the first
/// and last record that have no framed records are left out and returned
/// separately.
pub fn quarterly_frame_series(
    records: &[AfaRecord],
    timestamps: &BTreeMap<String, DateTime<Utc>>,
) -> (CategoricalTimeSeries, Vec<String>) {
    let mut by_q: BTreeMap<i32, Vec<u64>> = BTreeMap::new();
    for r in records {
        let (Some(frame), Some(t)) = (&r.frame, timestamps.get(&r.article_id)) else {
            continue;
        };
        by_q.entry(quarter_key(t)).or_insert_with(|| vec![0; Frame::ALL.len()])[frame_index(frame.primary_frame)] += 1;
    }
    let label = |k: i32| format!("{}Q{}", k.div_euclid(4), k.rem_euclid(4) + 1);
    let mut skipped = Vec::new();
    if let (Some(&lo), Some(&hi)) = (by_q.keys().next(), by_q.keys().next_back()) {
        for k in lo..=hi {
            if !by_q.contains_key(&k) {
                skipped.push(label(k));
            }
        }
    }
    let series = CategoricalTimeSeries {
        periods: by_q.keys().map(|&k| label(k)).collect(),
        categories: Frame::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        counts: by_q.into_values().collect(),
    };
    (series, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameShiftRow {
    pub frame: String,
    pub early_pct: f64,
    pub late_pct: f64,
    /// Percentage points, late minus early.
    pub delta: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub significance: Significance,
}

/// Frame shares in two periods with a 2×2 test per frame (this frame vs
/// the rest, early vs late). `Bonferroni` divides by the number of frames.
pub fn frame_shift_table(
    frames: &[String],
    early: &[u64],
    late: &[u64],
    correction: Correction,
) -> Result<Vec<FrameShiftRow>, AnalyticsError> {
    if early.len() != frames.len() || late.len() != frames.len() {
        return Err(AnalyticsError::MismatchedCategories(early.len(), late.len()));
    }
    let e_total: u64 = early.iter().sum();
    let l_total: u64 = late.iter().sum();
    if e_total == 0 {
        return Err(AnalyticsError::EmptyPeriod("early".into()));
    }
    if l_total == 0 {
        return Err(AnalyticsError::EmptyPeriod("late".into()));
    }
    let m = match correction {
        Correction::None => 1,
        Correction::Bonferroni => frames.len(),
        Correction::BonferroniWith(m) => m.max(1),
    };
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let early_pct = 100.0 * early[i] as f64 / e_total as f64;
            let late_pct = 100.0 * late[i] as f64 / l_total as f64;
            let t = vec![vec![early[i], e_total - early[i]], vec![late[i], l_total - late[i]]];
            // a frame absent (or exclusive) in both periods has nothing to test
            let (statistic, p_value) = match chi_square_independence(&t) {
                Ok(c) => (c.statistic, c.p_value),
                Err(_) => (0.0, 1.0),
            };
            FrameShiftRow {
                frame: f.clone(),
                early_pct,
                late_pct,
                delta: late_pct - early_pct,
                statistic,
                p_value,
                significance: Significance::classify(p_value, m),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFamily {
    Opportunity,
    Risk,
    Normative,
    Market,
}

impl FrameFamily {
    pub const ALL: [FrameFamily; 4] = [
        FrameFamily::Opportunity,
        FrameFamily::Risk,
        FrameFamily::Normative,
        FrameFamily::Market,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameFamily::Opportunity => "opportunity",
            FrameFamily::Risk => "risk",
            FrameFamily::Normative => "normative",
            FrameFamily::Market => "market",
        }
    }
}

pub fn frame_family(f: Frame) -> FrameFamily {
    match f {
        Frame::EconomicOpportunity | Frame::TechnologicalSolution => FrameFamily::Opportunity,
        Frame::EconomicRisk | Frame::EnvironmentalUrgency | Frame::UncertaintySkepticism => FrameFamily::Risk,
        Frame::RegulatoryCompliance | Frame::SocialResponsibility => FrameFamily::Normative,
        Frame::MarketDynamics => FrameFamily::Market,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    FrameFamily,
    PrimaryFrame,
    /// A record counts once for each distinct actor type it mentions.
    ActorType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityStats {
    pub group: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub n: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Premises per central claim (evidence plus supporting arguments),
/// summarized per group. Returns the stats and the names of groups with no
/// records.
pub fn argument_complexity(records: &[AfaRecord], group_by: GroupBy) -> (Vec<ComplexityStats>, Vec<String>) {
    let groups: Vec<String> = match group_by {
        GroupBy::FrameFamily => FrameFamily::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        GroupBy::PrimaryFrame => Frame::ALL.iter().map(|f| f.as_str().to_string()).collect(),
        GroupBy::ActorType => ActorType::ALL.iter().map(|a| a.as_str().to_string()).collect(),
    };
    let mut values: BTreeMap<&str, Vec<f64>> = groups.iter().map(|g| (g.as_str(), Vec::new())).collect();
    for r in records {
        let Some(arg) = &r.argument else { continue };
        let premises = arg.premise_count() as f64;
        let keys: Vec<&str> = match group_by {
            GroupBy::FrameFamily => r.frame.iter().map(|f| frame_family(f.primary_frame).as_str()).collect(),
            GroupBy::PrimaryFrame => r.frame.iter().map(|f| f.primary_frame.as_str()).collect(),
            GroupBy::ActorType => r
                .actors
                .iter()
                .flatten()
                .map(|a| a.actor_type.as_str())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        };
        for k in keys {
            values.get_mut(k).expect("group keys come from the same enums").push(premises);
        }
    }
    let mut stats = Vec::new();
    let mut omitted = Vec::new();
    for g in &groups {
        let mut v = values.remove(g.as_str()).unwrap_or_default();
        if v.is_empty() {
            omitted.push(g.clone());
            continue;
        }
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        stats.push(ComplexityStats {
            group: g.clone(),
            median: quantile(&v, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
            n: v.len(),
        });
    }
    (stats, omitted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub period: String,
    pub category: String,
    pub value: f64,
}

/// `(period, category, share)` triples for external charting.
pub fn plot_points(series: &CategoricalTimeSeries) -> Vec<PlotPoint> {
    let shares = series.shares();
    series
        .periods
        .iter()
        .zip(&shares)
        .flat_map(|(p, row)| {
            series.categories.iter().zip(row).map(move |(c, &v)| PlotPoint {
                period: p.clone(),
                category: c.clone(),
                value: v,
            })
        })
        .collect()
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn actor_short(a: &str) -> String {
    match ActorType::parse(a) {
        Some(ActorType::Company) => "Comp.",
        Some(ActorType::FinancialInstitution) => "Fin. Inst.",
        Some(ActorType::Government) => "Gov.",
        Some(ActorType::NgoAdvocacy) => "NGO",
        Some(ActorType::Individual) => "Indiv.",
        None => a,
    }
    .to_string()
}

fn title_case(s: &str) -> String {
    s.split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        })
        .collect::<Vec<String>>()
        .join(" ")
}

/// Percentages with one decimal; strata without data say so.
pub fn share_table_csv(s: &ShareSeries) -> String {
    let mut rows = vec![std::iter::once("Period".to_string())
        .chain(s.series.categories.iter().map(|c| actor_short(c)))
        .collect()];
    for (p, row) in s.series.periods.iter().zip(&s.shares) {
        if s.empty_periods.contains(p) {
            rows.push(vec![p.clone(), "no data".into()]);
        } else {
            rows.push(std::iter::once(p.clone()).chain(row.iter().map(|v| format!("{:.1}", 100.0 * v))).collect());
        }
    }
    csv_string(rows)
}

/// Signed residuals with one decimal and significance stars.
pub fn residual_table_csv(table: &LabeledTable, residuals: &ResidualMatrix) -> String {
    let mut rows = vec![std::iter::once(String::new())
        .chain(table.cols.iter().map(|c| title_case(c)))
        .collect()];
    for (i, r) in table.rows.iter().enumerate() {
        rows.push(
            std::iter::once(title_case(r))
                .chain(
                    residuals.residuals[i]
                        .iter()
                        .zip(&residuals.significance[i])
                        .map(|(v, s)| format!("{v:+.1}{}", s.stars())),
                )
                .collect(),
        );
    }
    csv_string(rows)
}

pub fn frame_shift_csv(rows: &[FrameShiftRow], early_label: &str, late_label: &str) -> String {
    let mut out = vec![vec![
        "Frame".to_string(),
        format!("{early_label} (%)"),
        format!("{late_label} (%)"),
        "Δ".to_string(),
        "p".to_string(),
    ]];
    for r in rows {
        out.push(vec![
            title_case(&r.frame),
            format!("{:.1}", r.early_pct),
            format!("{:.1}", r.late_pct),
            format!("{:+.1}{}", r.delta, r.significance.stars()),
            format!("{:.4}", r.p_value),
        ]);
    }
    csv_string(out)
}

pub fn complexity_csv(stats: &[ComplexityStats]) -> String {
    let mut out = vec![["group", "n", "median", "q1", "q3", "iqr"].map(String::from).to_vec()];
    for s in stats {
        out.push(vec![
            s.group.clone(),
            s.n.to_string(),
            format!("{:.1}", s.median),
            format!("{:.1}", s.q1),
            format!("{:.1}", s.q3),
            format!("{:.1}", s.iqr),
        ]);
    }
    csv_string(out)
}

pub fn series_counts_csv(series: &CategoricalTimeSeries) -> String {
    let mut out = vec![std::iter::once("period".to_string()).chain(series.categories.iter().cloned()).collect()];
    for (p, row) in series.periods.iter().zip(&series.counts) {
        out.push(std::iter::once(p.clone()).chain(row.iter().map(u64::to_string)).collect());
    }
    csv_string(out)
}
