use std::path::Path;

use super::config::TaskKind;
use crate::error::{Error, Result};
use crate::fsutil;

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Count(usize),
    Real(f64),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Count(n) => Some(*n as f64),
            Cell::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Count(n) => n.to_string(),
            Cell::Real(v) => sig6(*v),
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// One metrics row: a run evaluated on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub task: TaskKind,
    pub cells: Vec<(&'static str, Cell)>,
}

impl MetricsRow {
    pub fn get(&self, column: &str) -> Option<&Cell> {
        self.cells.iter().find(|(c, _)| *c == column).map(|(_, v)| v)
    }

    /// Numeric value of `column`; panics if absent or textual.
    pub fn value(&self, column: &str) -> f64 {
        self.get(column).and_then(Cell::as_f64).unwrap_or_else(|| panic!("no numeric column `{column}`"))
    }

    pub fn columns(&self) -> Vec<&'static str> {
        self.cells.iter().map(|(c, _)| *c).collect()
    }
}

/// `%g`-style rendering with 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{v:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders `rows` as CSV text with the given columns, in that order.
pub fn render_table(rows: &[MetricsRow], columns: &[&str], comments: &[String]) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::invalid("emit_table: no rows"))?;
    if let Some(other) = rows.iter().find(|r| r.task != first.task) {
        return Err(Error::invalid(format!("emit_table: mixed tasks {:?} and {:?}", first.task, other.task)));
    }
    let mut missing: Vec<&str> = Vec::new();
    for c in columns {
        if rows.iter().any(|r| r.get(c).is_none()) && !missing.contains(c) {
            missing.push(c);
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!("emit_table: missing columns {}", missing.join(", "))));
    }
    let header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    let body: Vec<Vec<String>> =
        rows.iter().map(|r| columns.iter().map(|c| r.get(c).expect("checked").render()).collect()).collect();
    let bytes = fsutil::csv_bytes(comments, Some(&header), &body)?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

/// Writes `rows` to `path` as CSV, one row per entry.
pub fn emit_table(rows: &[MetricsRow], columns: &[&str], comments: &[String], path: &Path) -> Result<()> {
    let text = render_table(rows, columns, comments)?;
    fsutil::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.1234567), "0.123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(0.00001234567), "1.23457e-05");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(999999.5), "1e+06");
        assert_eq!(sig6(f64::NAN), "nan");
    }

    fn row(task: TaskKind, v: f64) -> MetricsRow {
        MetricsRow { task, cells: vec![("run", Cell::Text("a".into())), ("rmse", Cell::Real(v))] }
    }

    #[test]
    fn table_shape_and_errors() {
        let text = render_table(&[row(TaskKind::Regression, 0.5)], &["rmse", "run"], &[]).unwrap();
        assert_eq!(text, "rmse,run\n0.5,a\n");
        let err = render_table(&[row(TaskKind::Regression, 0.5)], &["rmse", "iou", "epistemic"], &[]).unwrap_err();
        assert!(err.to_string().contains("iou, epistemic"), "{err}");
        assert!(
            render_table(&[row(TaskKind::Regression, 0.5), row(TaskKind::Classification, 0.5)], &["run"], &[]).is_err()
        );
        assert!(render_table(&[], &["run"], &[]).is_err());
    }
}
