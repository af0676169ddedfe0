//! Metrics, dataset builders, experiment orchestration.

pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use dataset::{build_dataset, load_dataset, save_dataset, Dataset, ExperimentConfig, MaskSource, Method, TestCase};
pub use experiment::{complete_case, run_experiment, MetricRow, Models, Report};
pub use metrics::{rmse, ssim, trace_rmse, SsimParams};
