//! Ranking metrics, the popularity baseline, complexity accounting and the order grid.

mod complexity;
mod grid;
mod metrics;
mod protocol;
mod report;

pub use complexity::{count_flops, count_params, flops_table, FLOPS_CONVENTION, FLOPS_LENGTHS};
pub use grid::{grid_experiment, select_hyperparameters, GridCell, GridTable, TuningResult};
pub use metrics::{hr_at_n, ndcg_at_n, rank_ground_truth};
pub use protocol::{evaluate_model, fit_and_evaluate, pop_baseline, EVAL_BATCH};
pub use report::EvalReport;
