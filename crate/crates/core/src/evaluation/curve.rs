use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::matching::MatchResult;
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Sweeps the threshold over the distinct `scores` in descending order. At
/// each threshold `matcher` re-matches everything scoring at least that much.
/// With no scores at all the curve is the single point `(0, 1)`.
pub fn pr_curve<F>(scores: &[f64], matcher: F) -> Result<Vec<CurvePoint>>
where
    F: Fn(f64) -> MatchResult,
{
    let mut thresholds: Vec<f64> = scores.iter().copied().filter(|s| !s.is_nan()).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    if thresholds.is_empty() {
        let m = matcher(f64::INFINITY);
        if m.ground_truth() == 0 {
            return Err(Error::NoGroundTruth);
        }
        return Ok(vec![CurvePoint { threshold: f64::INFINITY, recall: m.recall(), precision: m.precision() }]);
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let m = matcher(t);
        if m.ground_truth() == 0 {
            return Err(Error::NoGroundTruth);
        }
        out.push(CurvePoint { threshold: t, recall: m.recall(), precision: m.precision() });
    }
    Ok(out)
}

/// Trapezoidal area under precision over recall. The curve is extended
/// horizontally from its first point back to recall 0; recall never reached
/// contributes nothing.
pub fn auc(points: &[CurvePoint]) -> Result<f64> {
    let first = points.first().ok_or(Error::EmptyPoints)?;
    let mut area = 0.0;
    let mut prev = (0.0, first.precision);
    for p in points {
        let r = p.recall.clamp(0.0, 1.0);
        if r > prev.0 {
            area += (r - prev.0) * 0.5 * (p.precision + prev.1);
        }
        prev = (r.max(prev.0), p.precision);
    }
    Ok(area)
}

pub fn write_curve_csv(points: &[CurvePoint], path: &Path) -> Result<()> {
    let mut s = String::from("# hmd-pr-curve v1\nthreshold,recall,precision\n");
    for p in points {
        writeln!(s, "{},{},{}", p.threshold, p.recall, p.precision).unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::InvalidInput(format!("{}: {m}", path.display()));
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad("expected threshold,recall,precision"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
        out.push(CurvePoint { threshold: num(f[0])?, recall: num(f[1])?, precision: num(f[2])? });
    }
    Ok(out)
}

/// Renders one or more named curves as a standalone SVG plot.
pub fn write_curve_svg(curves: &[(String, Vec<CurvePoint>)], title: &str, path: &Path) -> Result<()> {
    const W: f64 = 480.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let (pw, ph) = (W - 2.0 * M, H - 2.0 * M);
    let sx = |r: f64| M + r * pw;
    let sy = |p: f64| H - M - p * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, "<!-- hmd-pr-plot v1 -->").unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<rect x="{M}" y="{M}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        writeln!(s, r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#ddd"/>"##, x = sx(v), y0 = sy(0.0), y1 = sy(1.0)).unwrap();
        writeln!(s, r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##, x0 = sx(0.0), x1 = sx(1.0), y = sy(v)).unwrap();
        if i % 2 == 0 {
            writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{v:.1}</text>"#, sx(v), H - M + 16.0).unwrap();
            writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.1}</text>"#, M - 6.0, sy(v) + 4.0).unwrap();
        }
    }
    writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">Recall</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {})">Precision</text>"#, H / 2.0, H / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="28" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title)).unwrap();
    for (k, (name, pts)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, sx(p.recall.clamp(0.0, 1.0)), sy(p.precision.clamp(0.0, 1.0))).unwrap();
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.trim_end()).unwrap();
        let area = auc(pts).unwrap_or(0.0);
        let ly = M + 18.0 + 16.0 * k as f64;
        writeln!(s, r#"<text x="{}" y="{ly}" font-size="12" fill="{color}" text-anchor="end">{} (AUC {:.3})</text>"#, W - M - 8.0, escape(name), area).unwrap();
    }
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
