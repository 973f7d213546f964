use crate::error::{Error, Result};

/// Per-point quantity summarised over each retained set.
#[derive(Clone, Copy, Debug)]
pub enum Outcome<'a> {
    /// Classification: whether each prediction is correct. Summary: accuracy.
    Correct(&'a [bool]),
    /// Regression: residual of each prediction. Summary: RMSE.
    Error(&'a [f64]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrValue {
    Accuracy,
    Rmse,
}

/// Performance of the most certain points as the retained fraction grows.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub kind: PrValue,
    /// Nominal retained fraction (uncertainty percentile), strictly increasing.
    pub recall: Vec<f64>,
    /// Accuracy or RMSE over the retained points.
    pub value: Vec<f64>,
    pub n_retained: Vec<usize>,
    /// Levels whose retained set was empty.
    pub skipped: Vec<f64>,
}

impl PrCurve {
    /// `1 / RMSE` for regression curves, unchanged accuracy otherwise.
    pub fn inverse_error(&self) -> Vec<f64> {
        match self.kind {
            PrValue::Accuracy => self.value.clone(),
            PrValue::Rmse => self.value.iter().map(|v| 1.0 / v).collect(),
        }
    }
}

/// Deciles `0.1, 0.2, ..., 1.0`.
pub fn default_percentiles() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// For each percentile `p`, keeps the points whose uncertainty is at most the
/// nearest-rank `p`-quantile (ties kept) and summarises `outcome` over them.
/// Retained sets are nested.
pub fn precision_recall_uncertainty(uncertainty: &[f64], outcome: Outcome<'_>, percentiles: &[f64]) -> Result<PrCurve> {
    let n = uncertainty.len();
    let (len, kind) = match outcome {
        Outcome::Correct(c) => (c.len(), PrValue::Accuracy),
        Outcome::Error(e) => (e.len(), PrValue::Rmse),
    };
    if len != n {
        return Err(Error::shape("precision_recall_uncertainty", format!("{n} uncertainties vs {len} outcomes")));
    }
    if uncertainty.iter().any(|u| u.is_nan()) {
        return Err(Error::invalid("precision_recall_uncertainty: NaN uncertainty"));
    }
    if percentiles.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) || percentiles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("precision_recall_uncertainty: percentiles must be strictly increasing in (0, 1]"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| uncertainty[a].total_cmp(&uncertainty[b]).then(a.cmp(&b)));

    // prefix sums of the summarised quantity in uncertainty order
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &i in &order {
        let v = match outcome {
            Outcome::Correct(c) => f64::from(u8::from(c[i])),
            Outcome::Error(e) => e[i] * e[i],
        };
        prefix.push(prefix.last().unwrap() + v);
    }

    let mut curve = PrCurve { kind, recall: vec![], value: vec![], n_retained: vec![], skipped: vec![] };
    for &p in percentiles {
        let rank = (p * n as f64).ceil() as usize;
        if rank == 0 {
            curve.skipped.push(p);
            continue;
        }
        let threshold = uncertainty[order[rank.min(n) - 1]];
        let kept = order.partition_point(|&i| uncertainty[i] <= threshold);
        let mean = prefix[kept] / kept as f64;
        curve.recall.push(p);
        curve.value.push(match kind {
            PrValue::Accuracy => mean,
            PrValue::Rmse => mean.sqrt(),
        });
        curve.n_retained.push(kept);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct_is_flat_one() {
        let u = [0.3, 0.1, 0.9, 0.5];
        let c = precision_recall_uncertainty(&u, Outcome::Correct(&[true; 4]), &default_percentiles()).unwrap();
        assert!(c.value.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn oracle_uncertainty_orders_errors() {
        let e: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 10.0 - 5.0).collect();
        let u: Vec<f64> = e.iter().map(|x| x.abs()).collect();
        let c = precision_recall_uncertainty(&u, Outcome::Error(&e), &default_percentiles()).unwrap();
        assert!(c.value.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.n_retained.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*c.n_retained.last().unwrap(), 200);
    }

    #[test]
    fn ties_at_threshold_are_retained() {
        let u = [1.0, 1.0, 1.0, 2.0];
        let c = precision_recall_uncertainty(&u, Outcome::Correct(&[true, false, true, true]), &[0.25]).unwrap();
        assert_eq!(c.n_retained, vec![3]);
        assert!((c.value[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_input_skips_levels() {
        let c = precision_recall_uncertainty(&[], Outcome::Error(&[]), &[0.5, 1.0]).unwrap();
        assert_eq!(c.skipped, vec![0.5, 1.0]);
        assert!(c.recall.is_empty());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(precision_recall_uncertainty(&[1.0], Outcome::Error(&[1.0]), &[0.0]).is_err());
        assert!(precision_recall_uncertainty(&[1.0], Outcome::Error(&[1.0]), &[0.5, 0.5]).is_err());
        assert!(precision_recall_uncertainty(&[1.0], Outcome::Error(&[1.0, 2.0]), &[1.0]).is_err());
    }
}
