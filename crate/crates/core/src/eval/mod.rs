//! Offline evaluation: metrics, experiment cells, and report rendering.

mod experiment;
pub mod metrics;
mod report;

pub use experiment::{
    cold_start_experiment, evaluate, evaluate_scorer, fit_method, newest_users, prepare, run_experiment, run_grid,
    ExperimentConfig, GridCell, GridSpec, GroundTruth, Method, Prepared,
};
pub use report::{write_cells_csv, write_plot_csv, write_reports_csv, EvalReport, Skipped, CSV_HEADER};
