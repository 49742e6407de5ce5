//! Seeded comparison experiments and their CSV/JSON reports.

mod config;
mod estimators;
mod experiment;
mod metrics;
mod report;

pub use config::{DerivedSeeds, EstimatorKind, ExperimentConfig};
pub use estimators::{
    evaluate_model, evaluate_music, score, train_estimator, BnnEstimator, Estimate, EstimatorModel, MusicRunner,
    TrainingRecord,
};
pub use experiment::{load_or_generate_train, perturbation_for, run_experiment, test_sets, ExperimentReport, SeriesResult};
pub use metrics::{ecdf, ecdf_at, matched_error, EcdfPoint, ErrorReport, ErrorSummary, SampleResult, MAX_MATCHED_ANGLES};
pub use report::{
    snr_label, write_ecdf_csv, write_error_report, write_json, write_scatter_csv, write_summary_csv, SeriesSummary,
};
