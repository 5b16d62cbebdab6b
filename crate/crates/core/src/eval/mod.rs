//! Accuracy, expected calibration error and report artifacts.

mod metrics;
mod report;

pub use metrics::{accuracy, ece, per_class_accuracy, CalibrationBin};
pub use report::{emit_report, EvalReport};
