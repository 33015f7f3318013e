//! Pearson χ² independence tests and adjusted standardized residuals.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::stats::{chi_square_sf, normal_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Some expected count is below 5, so the χ² approximation is rough.
    pub low_expected: bool,
}

struct Margins {
    rows: Vec<f64>,
    cols: Vec<f64>,
    total: f64,
}

fn margins(table: &[Vec<u64>]) -> Result<Margins, AnalyticsError> {
    let width = table.first().map_or(0, Vec::len);
    if table.is_empty() || width == 0 {
        return Err(AnalyticsError::EmptyTable);
    }
    for (row, r) in table.iter().enumerate() {
        if r.len() != width {
            return Err(AnalyticsError::RaggedTable {
                row,
                expected: width,
                found: r.len(),
            });
        }
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..width).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    if let Some(i) = rows.iter().position(|&s| s == 0.0) {
        return Err(AnalyticsError::ZeroRow(i));
    }
    if let Some(j) = cols.iter().position(|&s| s == 0.0) {
        return Err(AnalyticsError::ZeroColumn(j));
    }
    let total = rows.iter().sum();
    Ok(Margins { rows, cols, total })
}

/// Pearson χ² test of independence on a rows × columns count table.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquareResult, AnalyticsError> {
    let m = margins(table)?;
    let mut statistic = 0.0;
    let mut low_expected = false;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = m.rows[i] * m.cols[j] / m.total;
            low_expected |= e < 5.0;
            let d = o as f64 - e;
            statistic += d * d / e;
        }
    }
    let dof = (table.len() - 1) * (m.cols.len() - 1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        low_expected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    /// Divide thresholds by the number of cells.
    #[default]
    Bonferroni,
    /// Divide thresholds by an explicit family size.
    BonferroniWith(usize),
}

impl Correction {
    fn family_size(self, cells: usize) -> usize {
        match self {
            Correction::None => 1,
            Correction::Bonferroni => cells,
            Correction::BonferroniWith(m) => m.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Ns,
    P05,
    P01,
    P001,
}

impl Significance {
    /// Highest level whose corrected threshold `α / m` exceeds `p`.
    pub fn classify(p: f64, m: usize) -> Self {
        let m = m as f64;
        if p < 0.001 / m {
            Significance::P001
        } else if p < 0.01 / m {
            Significance::P01
        } else if p < 0.05 / m {
            Significance::P05
        } else {
            Significance::Ns
        }
    }

    pub fn stars(self) -> &'static str {
        match self {
            Significance::Ns => "",
            Significance::P05 => "*",
            Significance::P01 => "**",
            Significance::P001 => "***",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMatrix {
    pub residuals: Vec<Vec<f64>>,
    pub p_values: Vec<Vec<f64>>,
    pub significance: Vec<Vec<Significance>>,
    /// Family size the thresholds were divided by.
    pub family_size: usize,
}

/// Adjusted (Haberman) residuals `(O − E) / √(E·(1 − r/N)·(1 − c/N))`
/// with two-sided normal p-values and corrected significance levels.
pub fn standardized_residuals(table: &[Vec<u64>], correction: Correction) -> Result<ResidualMatrix, AnalyticsError> {
    let m = margins(table)?;
    if table.len() < 2 || m.cols.len() < 2 {
        return Err(AnalyticsError::TooFewCategories);
    }
    let cells = table.len() * m.cols.len();
    let family_size = correction.family_size(cells);
    let mut residuals = Vec::with_capacity(table.len());
    let mut p_values = Vec::with_capacity(table.len());
    let mut significance = Vec::with_capacity(table.len());
    for (i, row) in table.iter().enumerate() {
        let mut r_row = Vec::with_capacity(row.len());
        let mut p_row = Vec::with_capacity(row.len());
        let mut s_row = Vec::with_capacity(row.len());
        for (j, &o) in row.iter().enumerate() {
            let e = m.rows[i] * m.cols[j] / m.total;
            let var = e * (1.0 - m.rows[i] / m.total) * (1.0 - m.cols[j] / m.total);
            let r = (o as f64 - e) / var.sqrt();
            let p = normal_two_sided_p(r);
            r_row.push(r);
            p_row.push(p);
            s_row.push(Significance::classify(p, family_size));
        }
        residuals.push(r_row);
        p_values.push(p_row);
        significance.push(s_row);
    }
    Ok(ResidualMatrix {
        residuals,
        p_values,
        significance,
        family_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_hand_values() {
        let t = vec![vec![10, 20], vec![20, 10]];
        let c = chi_square_independence(&t).unwrap();
        // E = 15 everywhere: 4 · 25/15
        assert!((c.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.dof, 1);
        let r = standardized_residuals(&t, Correction::None).unwrap();
        // −5 / √(15 · 0.5 · 0.5)
        let want = -5.0 / (3.75f64).sqrt();
        assert!((r.residuals[0][0] - want).abs() < 1e-12);
        assert!((r.residuals[0][0] + 2.582).abs() < 1e-3);
    }

    #[test]
    fn independent_table() {
        let t = vec![vec![10, 20, 30], vec![20, 40, 60]];
        let c = chi_square_independence(&t).unwrap();
        assert!(c.statistic < 1e-12);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        let r = standardized_residuals(&t, Correction::Bonferroni).unwrap();
        assert!(r.significance.iter().flatten().all(|s| *s == Significance::Ns));
    }

    #[test]
    fn zero_margins_rejected() {
        assert!(matches!(
            chi_square_independence(&[vec![0, 0], vec![1, 2]]),
            Err(AnalyticsError::ZeroRow(0))
        ));
        assert!(matches!(
            chi_square_independence(&[vec![0, 3], vec![0, 2]]),
            Err(AnalyticsError::ZeroColumn(0))
        ));
    }

    #[test]
    fn bonferroni_tightens() {
        // |r| ≈ 2.58 gives p ≈ 0.0098: p<.01 alone, ns once divided by 32
        let t = vec![vec![10, 20], vec![20, 10]];
        let one = standardized_residuals(&t, Correction::None).unwrap();
        let many = standardized_residuals(&t, Correction::BonferroniWith(32)).unwrap();
        assert_eq!(one.significance[0][0], Significance::P01);
        assert_eq!(many.significance[0][0], Significance::Ns);
    }

    #[test]
    fn classify_thresholds() {
        assert_eq!(Significance::classify(0.04, 1), Significance::P05);
        assert_eq!(Significance::classify(0.04, 2), Significance::Ns);
        assert_eq!(Significance::classify(0.0009, 1), Significance::P001);
        assert_eq!(Significance::P01.stars(), "**");
    }

    fn table() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..5, 2usize..5).prop_flat_map(|(r, c)| proptest::collection::vec(proptest::collection::vec(1u64..50, c), r))
    }

    proptest! {
        #[test]
        fn chi_invariant_under_permutation(t in table(), seed in any::<u64>()) {
            let a = chi_square_independence(&t).unwrap();
            prop_assert!(a.statistic >= 0.0);
            let mut rows = t.clone();
            let shift = (seed as usize) % rows.len();
            rows.rotate_left(shift);
            let cols: Vec<Vec<u64>> = rows.iter().map(|r| { let mut r = r.clone(); r.reverse(); r }).collect();
            let b = chi_square_independence(&cols).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
        }

        #[test]
        fn two_by_two_residuals_equal_in_magnitude(a in 1u64..100, b in 1u64..100, c in 1u64..100, d in 1u64..100) {
            let r = standardized_residuals(&[vec![a, b], vec![c, d]], Correction::None).unwrap().residuals;
            let m = r[0][0].abs();
            for x in r.iter().flatten() {
                prop_assert!((x.abs() - m).abs() <= 1e-9 * m.max(1.0));
            }
        }

        #[test]
        fn outer_product_tables_score_zero(rs in proptest::collection::vec(1u64..6, 2..4), cs in proptest::collection::vec(1u64..6, 2..4)) {
            let t: Vec<Vec<u64>> = rs.iter().map(|r| cs.iter().map(|c| r * c).collect()).collect();
            prop_assert!(chi_square_independence(&t).unwrap().statistic < 1e-9);
        }
    }
}
