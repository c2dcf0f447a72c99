//! Metrics, curves and experiment drivers.

mod comparison;
mod experiment;
mod metrics;
mod report;

pub use comparison::{run_baselines, BaselineOutcome, DetectorResult, DetectorScore};
pub use experiment::{
    evaluate, fit_on, latency_rows, load_corpus, null_auc, prepare, run_latency_study, run_main_experiment, run_main_with,
    run_robustness_study, run_sensitivity_grid, run_windowed_driver, score_blocks, test_blocks, EvalReport, Fitted, GridCell,
    LatencyRow, MainOutcome, Prepared, RobustnessRow, ScoredBlock, WindowReport, FPR_LEVELS,
};
pub use metrics::{
    compute_auc, compute_curves, tpr_at_fpr, trapezoid_area, ConfusionMatrix, Curves, DerivedMetrics,
};
pub use report::{read_report, recorded_config, run_experiment, Artifacts};
