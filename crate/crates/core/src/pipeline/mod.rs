//! End-to-end runs: per-fold training, test prediction and reporting.

pub mod attribute;
pub mod config;
pub mod data;
pub mod metrics;
pub mod run;
pub mod train;

pub use attribute::{attribute_fold, AttributionReport};
pub use config::{ModelSpec, RunConfig, TrainHyper};
pub use data::{FoldData, Sample};
pub use metrics::{bin_label, compute_metrics, write_reports, BinComparison, FoldMetrics, MeanSd, Metrics, PredictionRow};
pub use run::{
    aggregate, cross_validate, load_fold_models, predict_fold, run_fold, save_fold_models, thread_count, FoldModels,
    FoldOutcome, PatientPrediction, THREADS_ENV,
};
pub use train::{predict_samples, train_fusion, train_unimodal, History, Networks};
