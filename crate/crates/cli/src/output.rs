//! CSV tables and SVG charts.
//!
//! Every table has a typed row; [`write_rows`] and [`read_rows`] round-trip
//! them. Floats are written in shortest round-trip form, so identical inputs
//! give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// `(delta, count)` of a box-count series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountRow {
    pub delta: f64,
    pub count: usize,
}

/// One dimension estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub value: f64,
    pub stderr: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub method: String,
}

/// Per-scale summary of an exceptional-direction sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalRow {
    pub delta: f64,
    pub net_size: usize,
    pub flagged: usize,
}

/// One direction of one sweep level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub delta: f64,
    pub direction: usize,
    pub box_count: usize,
    pub flagged: bool,
}

/// Energy at one scale; `brute_force` is filled where the oracle ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub delta: f64,
    pub points: usize,
    pub net_size: usize,
    pub eta: f64,
    pub energy: u64,
    pub brute_force: Option<u64>,
}

/// One random instance of the counting experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingRow {
    pub delta1: f64,
    pub delta2: f64,
    pub x_norm: f64,
    pub net_size: usize,
    pub count: usize,
    pub bound: f64,
    pub ratio: f64,
}

/// Counting ratios grouped by `δ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingBinRow {
    pub delta1: f64,
    pub instances: usize,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

/// One fat-plane cell of an almost-DC analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberRow {
    /// Cell index, coordinates joined by `;`.
    pub cell: String,
    pub points: usize,
    pub dimension: Option<f64>,
    pub good: bool,
}

/// One `Δ` of an almost-DC scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScanRow {
    pub delta: f64,
    pub witness: bool,
    pub lhs: Option<f64>,
    pub cloud_dimension: f64,
}

/// Closest pair of one direction of a transversality scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityRow {
    pub direction: usize,
    /// Unit vector, coordinates joined by `;`.
    pub u: String,
    pub omega: String,
    pub kappa: String,
    pub lhs: f64,
    pub det_abs: f64,
    pub margin: f64,
    pub violation: bool,
}

/// A verdict line, as stored alongside the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub check: String,
    pub verdict: String,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

/// Joins numbers with `;` for single-cell vector columns.
pub fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

/// Serializes rows to CSV bytes.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

/// Parses CSV bytes produced by [`to_csv`].
pub fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Writes rows to `path`.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    fs::write(path, to_csv(rows)?).with_context(|| format!("writing {}", path.display()))
}

/// Reads rows from `path`.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    from_csv(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// A log-log chart: scatter series plus optional fitted lines
/// `log y = slope · log x + intercept` (natural logs).
#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub lines: Vec<FitLine>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct FitLine {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl Chart {
    /// Renders to SVG. Non-positive values are skipped (log axes).
    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| (x.log10(), y.log10()))
            .collect();
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        if pts.is_empty() {
            svg.push_str("</svg>\n");
            return svg;
        }
        let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(pts.iter().map(|p| p.1));
        for l in &self.lines {
            // Keep fitted lines in view at the data's x-range.
            for x in [x0, x1] {
                let y = (l.slope * (x * std::f64::consts::LN_10) + l.intercept) / std::f64::consts::LN_10;
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        (x0, x1) = pad(x0, x1);
        (y0, y1) = pad(y0, y1);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
            let x = sx(d as f64);
            let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##, MARGIN, H - MARGIN);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#, H - MARGIN + 16.0);
        }
        for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
            let y = sy(d as f64);
            let _ = writeln!(svg, r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN, W - MARGIN);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"#, MARGIN - 6.0, y + 4.0);
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&self.x_label));
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        let mut legend = 0;
        for (i, s) in self.series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            for &(x, y) in s.points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0) {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x.log10()), sy(y.log10()));
            }
            legend_entry(&mut svg, legend, c, &s.label, false);
            legend += 1;
        }
        for (i, l) in self.lines.iter().enumerate() {
            let c = COLORS[(i + self.series.len()) % COLORS.len()];
            let y = |x: f64| (l.slope * (x * std::f64::consts::LN_10) + l.intercept) / std::f64::consts::LN_10;
            let (ax, bx) = bounds(pts.iter().map(|p| p.0));
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="6 3"/>"#,
                sx(ax),
                sy(y(ax)),
                sx(bx),
                sy(y(bx))
            );
            legend_entry(&mut svg, legend, c, &l.label, true);
            legend += 1;
        }
        svg.push_str("</svg>\n");
        svg
    }

    /// Writes the SVG to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_svg()).with_context(|| format!("writing {}", path.display()))
    }
}

fn legend_entry(svg: &mut String, i: usize, color: &str, label: &str, dashed: bool) {
    let y = MARGIN + 14.0 + 16.0 * i as f64;
    let x = MARGIN + 10.0;
    if dashed {
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-dasharray="6 3"/>"#, y - 4.0, x + 16.0, y - 4.0);
    } else {
        let _ = writeln!(svg, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, x + 8.0, y - 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, x + 22.0, escape(label));
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let span = (hi - lo).max(0.2);
    (lo - 0.05 * span, lo + 1.05 * span)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            EnergyRow { delta: 0.0625, points: 64, net_size: 34, eta: 0.125, energy: 15178, brute_force: Some(15178) },
            EnergyRow { delta: 1.0 / 3.0, points: 1, net_size: 2, eta: 0.1, energy: 0, brute_force: None },
        ];
        let bytes = to_csv(&rows).unwrap();
        assert_eq!(from_csv::<EnergyRow>(&bytes).unwrap(), rows);
        let fibers = vec![FiberRow { cell: join(&[-1i64, 2]), points: 3, dimension: None, good: false }];
        assert_eq!(from_csv::<FiberRow>(&to_csv(&fibers).unwrap()).unwrap(), fibers);
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let chart = Chart {
            title: "N(δ) <test>".into(),
            x_label: "1/δ".into(),
            y_label: "N".into(),
            series: vec![Series { label: "counts".into(), points: vec![(2.0, 2.0), (4.0, 4.0), (8.0, 8.0), (0.0, 1.0)] }],
            lines: vec![FitLine { label: "slope 1".into(), slope: 1.0, intercept: 0.0 }],
        };
        let a = chart.to_svg();
        assert_eq!(a, chart.to_svg());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 3 + 1);
        assert!(a.contains("&lt;test&gt;"));
    }
}
