//! Metrics, evaluation reports and the joint versus single-task comparison.

mod compare;
mod metrics;
mod report;

pub use compare::{mtl_vs_stl_report, scale_widths, ComparisonReport, ComparisonSetup, SeedOutcome};
pub use metrics::{accuracy, cs_at, epsilon_error, exact_sum, mae, mean_epsilon_error};
pub use report::{
    cross_database_eval, dump_predictions, evaluate, predict_dataset, AttributeMetrics, EvalDump, EvalOptions,
    MetricsReport, Predictor,
};
