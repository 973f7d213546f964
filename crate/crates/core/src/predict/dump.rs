//! Prediction dump files.
//!
//! Regression: `index,y_true,pred_mean,epistemic_var,aleatoric_var,total_var`.
//! Classification: `index,label,pred_class,max_prob,entropy,logit_var,p0..p{C-1}`.
//! Lines starting with `#` are comments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{argmax, ClassificationDecomposition, RegressionDecomposition};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRecord {
    pub index: usize,
    pub y_true: f64,
    pub pred_mean: f64,
    pub epistemic_var: f64,
    pub aleatoric_var: f64,
    pub total_var: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationRecord {
    pub index: usize,
    pub label: usize,
    pub pred_class: usize,
    pub max_prob: f64,
    pub entropy: f64,
    /// Absent for single-pass (MAP) predictions.
    pub logit_var: Option<f64>,
    pub probs: Vec<f64>,
}

/// One record per output element, row-major.
pub fn regression_records(y_true: &[f64], d: &RegressionDecomposition<f64>) -> Result<Vec<RegressionRecord>> {
    if y_true.len() != d.predictive_mean.numel() {
        return Err(Error::shape(
            "regression dump",
            format!("{} targets vs {} predictions", y_true.len(), d.predictive_mean.numel()),
        ));
    }
    Ok((0..y_true.len())
        .map(|i| RegressionRecord {
            index: i,
            y_true: y_true[i],
            pred_mean: d.predictive_mean.data()[i],
            epistemic_var: d.epistemic_var.data()[i],
            aleatoric_var: d.aleatoric_var.data()[i],
            total_var: d.total_var.data()[i],
        })
        .collect())
}

pub fn write_regression_dump(path: &Path, comments: &[String], records: &[RegressionRecord]) -> Result<()> {
    fsutil::write_atomic(path, &fsutil::csv_bytes(comments, None, records)?)
}

pub fn read_regression_dump(path: &Path) -> Result<Vec<RegressionRecord>> {
    let mut r = fsutil::csv_reader(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<RegressionRecord>, _>>()?)
}

pub fn classification_records(
    labels: &[usize],
    d: &ClassificationDecomposition<f64>,
) -> Result<Vec<ClassificationRecord>> {
    if labels.len() != d.mean_probs.rows() {
        return Err(Error::shape(
            "classification dump",
            format!("{} labels vs {} rows", labels.len(), d.mean_probs.rows()),
        ));
    }
    Ok((0..labels.len())
        .map(|i| {
            let p = d.mean_probs.row(i);
            let pred = argmax(p);
            ClassificationRecord {
                index: i,
                label: labels[i],
                pred_class: pred,
                max_prob: p[pred],
                entropy: d.predictive_entropy[i],
                logit_var: d.epistemic_logit_var.as_ref().map(|v| v[i]),
                probs: p.to_vec(),
            }
        })
        .collect())
}

fn classification_header(classes: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["index", "label", "pred_class", "max_prob", "entropy", "logit_var"].iter().map(|s| s.to_string()).collect();
    h.extend((0..classes).map(|c| format!("p{c}")));
    h
}

pub fn write_classification_dump(path: &Path, comments: &[String], records: &[ClassificationRecord]) -> Result<()> {
    let classes = records.first().map_or(0, |r| r.probs.len());
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.index.to_string(),
                r.label.to_string(),
                r.pred_class.to_string(),
                r.max_prob.to_string(),
                r.entropy.to_string(),
                r.logit_var.map(|v| v.to_string()).unwrap_or_default(),
            ];
            row.extend(r.probs.iter().map(|p| p.to_string()));
            row
        })
        .collect();
    fsutil::write_atomic(path, &fsutil::csv_bytes(comments, Some(&classification_header(classes)), &rows)?)
}

pub fn read_classification_dump(path: &Path) -> Result<Vec<ClassificationRecord>> {
    let mut r = fsutil::csv_reader(path)?;
    let header = r.headers()?.clone();
    let classes = header.len().saturating_sub(6);
    if header.iter().collect::<Vec<_>>() != classification_header(classes) {
        return Err(Error::Format(format!("unexpected classification dump header: {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ClassificationRecord {
                index: int(&rec[0])?,
                label: int(&rec[1])?,
                pred_class: int(&rec[2])?,
                max_prob: num(&rec[3])?,
                entropy: num(&rec[4])?,
                logit_var: if rec[5].is_empty() { None } else { Some(num(&rec[5])?) },
                probs: (6..rec.len()).map(|i| num(&rec[i])).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Which dump a header belongs to.
pub fn is_regression_header(first_line: &str) -> bool {
    first_line.trim() == "index,y_true,pred_mean,epistemic_var,aleatoric_var,total_var"
}
