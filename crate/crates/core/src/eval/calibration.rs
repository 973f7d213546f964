use statrs::distribution::{ContinuousCDF, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::Likelihood;

/// Nominal probability (or confidence level) against observed frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    /// Strictly increasing, in `(0, 1)` for regression levels and `[0, 1]`
    /// for classification bin means.
    pub nominal: Vec<f64>,
    pub observed: Vec<f64>,
    pub counts: Vec<usize>,
}

impl CalibrationCurve {
    pub fn len(&self) -> usize {
        self.nominal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal.is_empty()
    }
}

pub const DEFAULT_BINS: usize = 10;

/// Reliability curve over all (point, class) probabilities.
///
/// Probabilities are put in `n_bins` equal-width bins over `[0, 1]`; each
/// occupied bin reports the mean predicted probability as nominal and the
/// fraction of its entries whose class is the true label as observed.
pub fn classification_calibration(probs: &Tensor<f64>, labels: &[usize], n_bins: usize) -> Result<CalibrationCurve> {
    if n_bins < 2 {
        return Err(Error::invalid("classification_calibration: need at least 2 bins"));
    }
    if probs.ndim() != 2 || probs.rows() != labels.len() {
        return Err(Error::shape(
            "classification_calibration",
            format!("{:?} vs {} labels", probs.shape(), labels.len()),
        ));
    }
    let c = probs.last_dim();
    let mut sum_p = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.row(i);
        let total: f64 = row.iter().sum();
        if label >= c || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("classification_calibration: invalid row {i}")));
        }
        for (k, &p) in row.iter().enumerate() {
            let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
            sum_p[b] += p;
            counts[b] += 1;
            hits[b] += usize::from(k == label);
        }
    }
    let mut curve = CalibrationCurve { nominal: vec![], observed: vec![], counts: vec![] };
    for b in 0..n_bins {
        if counts[b] > 0 {
            curve.nominal.push(sum_p[b] / counts[b] as f64);
            curve.observed.push(hits[b] as f64 / counts[b] as f64);
            curve.counts.push(counts[b]);
        }
    }
    Ok(curve)
}

/// Confidence levels `0.05, 0.10, ..., 0.95`.
pub fn default_levels() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

/// Half-width of the central `q` interval of a zero-mean distribution of the
/// given family and variance.
pub fn central_half_width(likelihood: Likelihood, variance: f64, q: f64) -> f64 {
    match likelihood {
        Likelihood::Gaussian => {
            let z = Normal::standard().inverse_cdf(0.5 + q / 2.0);
            z * variance.sqrt()
        }
        Likelihood::Laplace => {
            let b = (variance / 2.0).sqrt();
            -b * (1.0 - q).ln()
        }
    }
}

/// Fraction of targets inside the central `q` interval of each predicted
/// distribution, for every level `q` in `grid`.
pub fn regression_calibration(
    pred_mean: &[f64],
    total_var: &[f64],
    y_true: &[f64],
    likelihood: Likelihood,
    grid: &[f64],
) -> Result<CalibrationCurve> {
    let n = y_true.len();
    if pred_mean.len() != n || total_var.len() != n || n == 0 {
        return Err(Error::shape(
            "regression_calibration",
            format!("{} / {} / {}", pred_mean.len(), total_var.len(), n),
        ));
    }
    if let Some(v) = total_var.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("regression_calibration: non-positive variance {v}")));
    }
    if grid.is_empty() || grid.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("regression_calibration: levels must be strictly increasing in (0, 1)"));
    }
    let observed = grid
        .iter()
        .map(|&q| {
            let inside = (0..n)
                .filter(|&i| (y_true[i] - pred_mean[i]).abs() <= central_half_width(likelihood, total_var[i], q))
                .count();
            inside as f64 / n as f64
        })
        .collect();
    Ok(CalibrationCurve { nominal: grid.to_vec(), observed, counts: vec![n; grid.len()] })
}

/// Count-weighted mean of `(observed - nominal)^2`.
pub fn calibration_mse(curve: &CalibrationCurve) -> Result<f64> {
    let total: usize = curve.counts.iter().sum();
    if curve.is_empty() || total == 0 {
        return Err(Error::invalid("calibration_mse: empty curve"));
    }
    let sse: f64 =
        (0..curve.len()).map(|i| curve.counts[i] as f64 * (curve.observed[i] - curve.nominal[i]).powi(2)).sum();
    Ok(sse / total as f64)
}
