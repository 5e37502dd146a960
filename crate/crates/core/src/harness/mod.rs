//! Experiment driver: configuration, instrumented training, sweeps, the
//! weight-decay recommendation rule, persistence and the estimator study.

pub mod config;
pub mod report;
pub mod study;
pub mod svg;
pub mod sweep;
pub mod train;

pub use config::{early_epoch, log_grid, DatasetSpec, OptimizerSpec, Seeds, SweepGrid, Timing, TrainConfig};
pub use report::{
    overhead_report, parse_sweep_csv, parse_trace_csv, sweep_csv, trace_csv, write_sweep, write_trace, SweepRow,
};
pub use study::{estimator_study, EstimatorStudy};
pub use sweep::{
    early_sweep, recommend_from_readings, recommend_wd, sweep, Candidate, Recommendation, SweepResult, SweepRun,
};
pub use train::{train, train_epochs, EpochMetrics, MetricTrace, Trainer};
