//! Uncertainty-quality evaluation and task metrics.

mod calibration;
mod curves;
mod metrics;
mod pr;

pub use calibration::{
    calibration_mse, central_half_width, classification_calibration, default_levels, regression_calibration,
    CalibrationCurve, DEFAULT_BINS,
};
pub use curves::{read_calibration_csv, read_pr_csv, write_calibration_csv, write_pr_csv, CurveFile};
pub use metrics::{classification_metrics, regression_metrics, rmse, ClassificationMetrics, RegressionMetrics};
pub use pr::{default_percentiles, precision_recall_uncertainty, Outcome, PrCurve, PrValue};
