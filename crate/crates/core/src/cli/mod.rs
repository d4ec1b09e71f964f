//! Batch driver: configuration, the optimization loop, on-disk artifacts
//! and the full-versus-IRA comparison.

mod compare;
mod config;
mod history;
mod run;

pub use compare::{compare, four_significant, percent_difference, ComparisonReport};
pub use config::{ResolvedParams, RunConfig, SolverKind};
pub use history::{format_history, format_summary, parse_history, HistoryRow, RunRecord, RunSummary, HISTORY_HEADER};
pub use run::{initial_design, run, run_problem, Evaluation, Evaluator};
