use crate::error::{Error, Result};

/// Depth-style regression metrics. `delta*` are fractions in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionMetrics {
    pub rel: f64,
    pub rms: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("rmse", format!("{} vs {}", pred.len(), truth.len())));
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// `rel`, `rms`, `log10` and `delta_k` (`max(p/t, t/p) < 1.25^k`). Ratio
/// metrics need positive predictions and truth.
pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<RegressionMetrics> {
    let rms = rmse(pred, truth)?;
    if let Some(v) = truth.iter().chain(pred).find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("regression_metrics: ratio metrics need positive values, got {v}")));
    }
    let n = pred.len() as f64;
    let rel = pred.iter().zip(truth).map(|(p, t)| (p - t).abs() / t).sum::<f64>() / n;
    let log10 = pred.iter().zip(truth).map(|(p, t)| (p.log10() - t.log10()).abs()).sum::<f64>() / n;
    let delta = |k: i32| {
        let thr = 1.25f64.powi(k);
        pred.iter().zip(truth).filter(|(p, t)| (*p / *t).max(*t / *p) < thr).count() as f64 / n
    };
    Ok(RegressionMetrics { rel, rms, log10, delta1: delta(1), delta2: delta(2), delta3: delta(3) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Mean IoU over classes present in labels or predictions.
    pub mean_iou: f64,
    /// `None` for classes absent from both.
    pub per_class_iou: Vec<Option<f64>>,
}

pub fn classification_metrics(pred: &[usize], labels: &[usize], classes: usize) -> Result<ClassificationMetrics> {
    if pred.len() != labels.len() || pred.is_empty() {
        return Err(Error::shape("classification_metrics", format!("{} vs {}", pred.len(), labels.len())));
    }
    if let Some(c) = pred.iter().chain(labels).find(|&&c| c >= classes) {
        return Err(Error::invalid(format!("class {c} out of range for {classes} classes")));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &l) in pred.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let per_class_iou: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / pred.len() as f64,
        mean_iou: present.iter().sum::<f64>() / present.len() as f64,
        per_class_iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_regression() {
        let m = regression_metrics(&[1.0, 2.5], &[1.0, 2.5]).unwrap();
        assert_eq!(m, RegressionMetrics { rel: 0.0, rms: 0.0, log10: 0.0, delta1: 1.0, delta2: 1.0, delta3: 1.0 });
    }

    #[test]
    fn doubled_predictions() {
        let m = regression_metrics(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0));
        assert!((m.rel - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_pair() {
        let m = regression_metrics(&[1.0], &[2.0]).unwrap();
        assert_eq!((m.rms, m.rel), (1.0, 0.5));
        assert!((m.log10 - 2f64.log10()).abs() < 1e-15);
        assert!(regression_metrics(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn iou_examples() {
        let m = classification_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.accuracy, m.mean_iou), (1.0, 1.0));
        let m = classification_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.per_class_iou, vec![Some(0.5), Some(0.0)]);
        assert_eq!(m.mean_iou, 0.25);
        let m = classification_metrics(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(m.per_class_iou, vec![Some(1.0), None, None]);
    }
}
