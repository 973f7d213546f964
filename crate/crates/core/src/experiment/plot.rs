use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{CurveFile, PrValue};
use crate::fsutil;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn px(v: f64, lo: f64, hi: f64) -> f64 {
    MARGIN + (v - lo) / (hi - lo) * (SIZE - 2.0 * MARGIN)
}

fn py(v: f64, lo: f64, hi: f64) -> f64 {
    SIZE - px(v, lo, hi)
}

/// Renders a curve as a standalone SVG document. The output depends only on
/// the curve and the comments.
pub fn render_svg(curve: &CurveFile, comments: &[String]) -> Result<String> {
    let (xs, ys, x_label, y_label, title, y_hi) = match curve {
        CurveFile::Calibration(c) => (&c.nominal, &c.observed, "expected", "observed", "Calibration", 1.0),
        CurveFile::Pr(c) => {
            let (label, hi) = match c.kind {
                PrValue::Accuracy => ("accuracy", 1.0),
                PrValue::Rmse => ("rmse", c.value.iter().copied().fold(0.0, f64::max) * 1.05),
            };
            (&c.recall, &c.value, "recall", label, "Precision-recall", hi)
        }
    };
    if xs.is_empty() {
        return Err(Error::invalid("emit_plot: empty curve"));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("emit_plot: non-finite point"));
    }
    let y_hi = if y_hi > 0.0 { y_hi } else { 1.0 };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    for c in comments {
        writeln!(s, "<!-- {} -->", c.replace("--", "- -")).unwrap();
    }
    writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (px(0.0, 0.0, 1.0), px(1.0, 0.0, 1.0), py(0.0, 0.0, 1.0), py(1.0, 0.0, 1.0));
    writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (gx, gy) = (px(f, 0.0, 1.0), py(f, 0.0, 1.0));
        writeln!(s, r#"<text x="{gx:.2}" y="{:.2}" font-size="10" text-anchor="middle">{f:.2}</text>"#, y0 + 14.0)
            .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.3}</text>"#,
            x0 - 4.0,
            gy + 3.0,
            f * y_hi
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    )
    .unwrap();
    writeln!(s, r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#, SIZE / 2.0, SIZE / 2.0).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">{title}</text>"#, SIZE / 2.0).unwrap();
    if matches!(curve, CurveFile::Calibration(_)) {
        writeln!(s, r#"<line class="reference" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="gray" stroke-dasharray="4 4"/>"#).unwrap();
    }
    let points: Vec<String> =
        xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x, 0.0, 1.0), py(y, 0.0, y_hi))).collect();
    writeln!(
        s,
        r#"<polyline class="curve" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    )
    .unwrap();
    for p in &points {
        let (cx, cy) = p.split_once(',').expect("point");
        writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="steelblue"/>"#).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(curve: &CurveFile, path: &Path, comments: &[String]) -> Result<()> {
    let svg = render_svg(curve, comments)?;
    fsutil::write_atomic(path, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CalibrationCurve, PrCurve};

    fn cal() -> CurveFile {
        CurveFile::Calibration(CalibrationCurve {
            nominal: vec![0.25, 0.75],
            observed: vec![0.3, 0.7],
            counts: vec![4, 4],
        })
    }

    #[test]
    fn deterministic_with_diagonal() {
        let a = render_svg(&cal(), &["config_hash: ab".into()]).unwrap();
        assert_eq!(a, render_svg(&cal(), &["config_hash: ab".into()]).unwrap());
        assert!(a.contains(r#"class="reference""#));
        assert!(a.contains("<!-- config_hash: ab -->"));
    }

    #[test]
    fn pr_has_no_diagonal_and_empty_is_rejected() {
        let pr = PrCurve {
            kind: PrValue::Rmse,
            recall: vec![0.5, 1.0],
            value: vec![0.1, 0.2],
            n_retained: vec![1, 2],
            skipped: vec![],
        };
        assert!(!render_svg(&CurveFile::Pr(pr), &[]).unwrap().contains("reference"));
        let empty = CurveFile::Calibration(CalibrationCurve { nominal: vec![], observed: vec![], counts: vec![] });
        assert!(render_svg(&empty, &[]).is_err());
    }
}
