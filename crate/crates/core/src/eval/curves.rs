//! Curve files: `nominal,observed,count` and `recall,value,n_retained`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CalibrationCurve, PrCurve, PrValue};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Serialize, Deserialize)]
struct CalibrationRow {
    nominal: f64,
    observed: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct PrRow {
    recall: f64,
    value: f64,
    n_retained: usize,
}

const PR_KIND_PREFIX: &str = "value: ";

pub fn write_calibration_csv(path: &Path, comments: &[String], curve: &CalibrationCurve) -> Result<()> {
    let rows: Vec<CalibrationRow> = (0..curve.len())
        .map(|i| CalibrationRow { nominal: curve.nominal[i], observed: curve.observed[i], count: curve.counts[i] })
        .collect();
    fsutil::write_atomic(path, &fsutil::csv_bytes(comments, None, &rows)?)
}

pub fn write_pr_csv(path: &Path, comments: &[String], curve: &PrCurve) -> Result<()> {
    let mut comments = comments.to_vec();
    let kind = match curve.kind {
        PrValue::Accuracy => "accuracy",
        PrValue::Rmse => "rmse",
    };
    comments.push(format!("{PR_KIND_PREFIX}{kind}"));
    let rows: Vec<PrRow> = (0..curve.recall.len())
        .map(|i| PrRow { recall: curve.recall[i], value: curve.value[i], n_retained: curve.n_retained[i] })
        .collect();
    fsutil::write_atomic(path, &fsutil::csv_bytes(&comments, None, &rows)?)
}

fn split_comments(text: &str) -> (Vec<&str>, String) {
    let mut comments = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix('#') {
            Some(c) => comments.push(c.trim()),
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    (comments, body)
}

pub fn read_calibration_csv(path: &Path) -> Result<CalibrationCurve> {
    match CurveFile::read(path)? {
        CurveFile::Calibration(c) => Ok(c),
        CurveFile::Pr(_) => Err(Error::Format(format!("{} is a PR curve", path.display()))),
    }
}

pub fn read_pr_csv(path: &Path) -> Result<PrCurve> {
    match CurveFile::read(path)? {
        CurveFile::Pr(c) => Ok(c),
        CurveFile::Calibration(_) => Err(Error::Format(format!("{} is a calibration curve", path.display()))),
    }
}

/// A curve file of either kind, detected from its header.
#[derive(Clone, Debug, PartialEq)]
pub enum CurveFile {
    Calibration(CalibrationCurve),
    Pr(PrCurve),
}

impl CurveFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (comments, body) = split_comments(&text);
        let header = body.lines().next().unwrap_or_default().trim().to_string();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        match header.as_str() {
            "nominal,observed,count" => {
                let mut c = CalibrationCurve { nominal: vec![], observed: vec![], counts: vec![] };
                for row in rdr.deserialize::<CalibrationRow>() {
                    let row = row?;
                    c.nominal.push(row.nominal);
                    c.observed.push(row.observed);
                    c.counts.push(row.count);
                }
                Ok(CurveFile::Calibration(c))
            }
            "recall,value,n_retained" => {
                let kind = match comments.iter().find_map(|c| c.strip_prefix(PR_KIND_PREFIX)) {
                    Some("accuracy") => PrValue::Accuracy,
                    _ => PrValue::Rmse,
                };
                let mut c = PrCurve { kind, recall: vec![], value: vec![], n_retained: vec![], skipped: vec![] };
                for row in rdr.deserialize::<PrRow>() {
                    let row = row?;
                    c.recall.push(row.recall);
                    c.value.push(row.value);
                    c.n_retained.push(row.n_retained);
                }
                Ok(CurveFile::Pr(c))
            }
            other => Err(Error::Format(format!("unknown curve header `{other}`"))),
        }
    }
}
