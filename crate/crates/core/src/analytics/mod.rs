//! Longitudinal statistics over extraction records.

mod chi;
mod pelt;
mod tables;

pub use chi::{
    chi_square_independence, standardized_residuals, ChiSquareResult, Correction, ResidualMatrix,
    Significance,
};
pub use pelt::{
    default_sweep, pelt_changepoints, penalty_sweep, CategoricalTimeSeries, ChangepointResult,
    Penalty, Segment, SegmentCost, SweepPoint, MIN_PERIODS,
};
pub use tables::{
    actor_frame_table, actor_share_series, argument_complexity, frame_family, frame_shift_table,
    quarter_label, quarterly_frame_series, residual_table_csv, series_counts_csv, share_table_csv,
    frame_shift_csv, complexity_csv, plot_points, ComplexityStats, FrameFamily, FrameShiftRow,
    GroupBy, LabeledTable, PlotPoint, ShareSeries,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("empty table")]
    EmptyTable,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedTable {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {0} sums to zero")]
    ZeroRow(usize),
    #[error("column {0} sums to zero")]
    ZeroColumn(usize),
    #[error("residuals need at least two rows and two columns")]
    TooFewCategories,
    #[error("series has {periods} periods, need at least {min}")]
    SeriesTooShort { periods: usize, min: usize },
    #[error("period `{0}` has no observations")]
    EmptyPeriod(String),
    #[error("penalty must be finite and non-negative, got {0}")]
    BadPenalty(f64),
    #[error("early and late counts cover different frame sets ({0} vs {1})")]
    MismatchedCategories(usize, usize),
}
