//! Diagnostics computed from run records: confidence intervals, selection
//! occurrence curves, mislabeled-fraction overlays, weight entropy, and the
//! CSV/SVG files that present them.

mod curves;
mod report;
mod stats;
pub mod svg;

pub use curves::{
    mislabeled_fraction_overlay, selection_occurrence_curve, weight_entropy, weight_entropy_series, windowed_counts,
};
pub use report::{emit_plots, load_runs, summary_table, AnalysisError, AnalyzeOptions, Figure, RunData, SummaryRow};
pub use stats::{confidence_interval, t_quantile, StatsError};
