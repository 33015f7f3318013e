//! Plain-text rendering of the result tables. F1, α and DVF scores use three
//! decimals, percentages one.

use crate::agreement::MetricReport;
use crate::analytics::{
    ChangepointResult, ChiSquareResult, ComplexityStats, FrameShiftRow, LabeledTable, ResidualMatrix,
    ShareSeries, SweepPoint,
};
use crate::dvf::{Deviation, Dimension, DvfReport};

pub const NO_DATA: &str = "no data";

/// Columns padded to their widest cell; the first column left-aligned,
/// the rest right-aligned.
pub fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len().max(rows.iter().map(Vec::len).max().unwrap_or(0));
    let mut widths = vec![0usize; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (i, c) in row.iter().enumerate() {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |row: &[String]| {
        let cells: Vec<String> = (0..cols)
            .map(|i| {
                let c = row.get(i).map_or("", String::as_str);
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        cells.join("  ").trim_end().to_string()
    };
    let rule: String = "-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1));
    let mut out = vec![line(header), rule];
    out.extend(rows.iter().map(|r| line(r)));
    out.join("\n") + "\n"
}

pub fn section(title: &str, body: &str) -> String {
    format!("== {title} ==\n{body}\n")
}

pub fn no_data_stanza(title: &str, reason: &str) -> String {
    section(title, &format!("{NO_DATA}: {reason}\n"))
}

fn s(x: &str) -> String {
    x.to_string()
}

fn dec3(v: f64) -> String {
    format!("{v:.3}")
}

fn pct(v: f64) -> String {
    format!("{v:.1}")
}

fn p_value(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn agreement_table(rows: &[MetricReport]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = dec3(r.value);
            if r.degenerate {
                v.push_str(" (degenerate)");
            }
            vec![r.component.clone(), r.metric.clone(), v, r.support.to_string()]
        })
        .collect();
    text_table(&[s("Component"), s("Metric"), s("Value"), s("n")], &body)
}

pub fn dvf_table(report: &DvfReport) -> String {
    let mut header = vec![s("Dim.")];
    header.extend(report.judges.iter().map(|j| j.judge_id.clone()));
    header.push(s("Agg."));
    let body: Vec<Vec<String>> = Dimension::ALL
        .iter()
        .map(|&d| {
            let mut row = vec![s(d.label())];
            row.extend(report.judges.iter().map(|j| dec3(j.means.get(d))));
            row.push(dec3(report.aggregate.get(d)));
            row
        })
        .collect();
    format!("{}n = {}\n", text_table(&header, &body), report.sample_size)
}

pub fn deviation_table(devs: &[Deviation], tolerance: f64) -> String {
    let body: Vec<Vec<String>> = devs
        .iter()
        .map(|d| {
            vec![
                s(d.dimension.label()),
                dec3(d.human),
                dec3(d.automated),
                dec3(d.deviation),
                if d.flagged { s("yes") } else { s("") },
            ]
        })
        .collect();
    text_table(
        &[s("Dim."), s("Human"), s("Automated"), s("|Dev.|"), format!("> {tolerance}")],
        &body,
    )
}

pub fn share_table(shares: &ShareSeries) -> String {
    let mut header = vec![s("Period")];
    header.extend(shares.series.categories.iter().cloned());
    header.push(s("n"));
    let body: Vec<Vec<String>> = shares
        .series
        .periods
        .iter()
        .zip(&shares.shares)
        .zip(&shares.series.counts)
        .map(|((p, row), counts)| {
            let n: u64 = counts.iter().sum();
            let mut out = vec![p.clone()];
            if n == 0 {
                out.push(s(NO_DATA));
            } else {
                out.extend(row.iter().map(|v| pct(100.0 * v)));
            }
            out.push(n.to_string());
            out
        })
        .collect();
    text_table(&header, &body)
}

pub fn residual_table(table: &LabeledTable, residuals: &ResidualMatrix, chi: &ChiSquareResult) -> String {
    let mut header = vec![String::new()];
    header.extend(table.cols.iter().cloned());
    let body: Vec<Vec<String>> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![r.clone()];
            row.extend(
                residuals.residuals[i]
                    .iter()
                    .zip(&residuals.significance[i])
                    .map(|(v, sig)| format!("{v:+.1}{}", sig.stars())),
            );
            row
        })
        .collect();
    let mut out = text_table(&header, &body);
    out.push_str(&format!(
        "chi2({}) = {:.1}, p = {}{}; family size {}\n",
        chi.dof,
        chi.statistic,
        p_value(chi.p_value),
        if chi.low_expected { ", some expected counts < 5" } else { "" },
        residuals.family_size
    ));
    out
}

pub fn frame_shift_text(rows: &[FrameShiftRow], early: &str, late: &str) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.frame.clone(),
                pct(r.early_pct),
                pct(r.late_pct),
                format!("{:+.1}{}", r.delta, r.significance.stars()),
                p_value(r.p_value),
            ]
        })
        .collect();
    text_table(
        &[s("Frame"), format!("{early} (%)"), format!("{late} (%)"), s("Delta"), s("p")],
        &body,
    )
}

pub fn complexity_table(stats: &[ComplexityStats]) -> String {
    let body: Vec<Vec<String>> = stats
        .iter()
        .map(|c| {
            vec![
                c.group.clone(),
                c.n.to_string(),
                format!("{:.1}", c.median),
                format!("{:.1}", c.q1),
                format!("{:.1}", c.q3),
                format!("{:.1}", c.iqr),
            ]
        })
        .collect();
    text_table(&[s("Group"), s("n"), s("Median"), s("Q1"), s("Q3"), s("IQR")], &body)
}

pub fn changepoint_text(result: &ChangepointResult, sweep: &[SweepPoint]) -> String {
    let breaks = if result.changepoint_periods.is_empty() {
        s("none")
    } else {
        result.changepoint_periods.join(", ")
    };
    let mut out = format!(
        "penalty {:.2}: {} segment(s), breaks at {breaks}\n",
        result.penalty,
        result.segments.len()
    );
    if !sweep.is_empty() {
        let body: Vec<Vec<String>> = sweep
            .iter()
            .map(|p| vec![format!("{:.2}", p.penalty), p.changepoints.len().to_string()])
            .collect();
        out.push_str(&text_table(&[s("Penalty"), s("Breaks")], &body));
    }
    out
}
