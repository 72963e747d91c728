//! Static SVG line charts from sweep CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// Sorted by x; y is averaged over rows sharing an x value.
    pub points: Vec<(f64, f64)>,
}

/// Group key ordering: numeric when every key parses, else lexicographic.
fn order_groups(mut keys: Vec<String>) -> Vec<String> {
    if keys.iter().all(|k| k.parse::<f64>().is_ok()) {
        keys.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        keys.sort();
    }
    keys
}

/// Reads `x` and `y` (and `group_by`) from CSV text. Rows whose x or y do not
/// parse as finite numbers are skipped.
pub fn collect_series(csv_text: &[u8], x: &str, y: &str, group_by: Option<&str>) -> Result<Vec<Series>> {
    let mut rdr = csv::Reader::from_reader(csv_text);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| HarnessError::UnknownColumn(name.to_string()));
    let (xi, yi) = (col(x)?, col(y)?);
    let gi = group_by.map(col).transpose()?;
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    let mut n_rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        n_rows += 1;
        let num = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
        let (Some(xv), Some(yv)) = (num(xi), num(yi)) else { continue };
        let key = gi.and_then(|g| rec.get(g)).unwrap_or("all").to_string();
        let slot = groups.entry(key).or_default().entry(xv.to_bits()).or_insert((xv, 0.0, 0));
        slot.1 += yv;
        slot.2 += 1;
    }
    if n_rows == 0 {
        return Err(HarnessError::Config("no data rows".into()));
    }
    let keys = order_groups(groups.keys().cloned().collect());
    Ok(keys
        .into_iter()
        .map(|k| {
            let mut points: Vec<(f64, f64)> = groups[&k].values().map(|&(xv, sum, n)| (xv, sum / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: k, points }
        })
        .collect())
}

/// Round numbers for axis ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(series: &[Series], x: &str, y: &str, group_by: Option<&str>) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(px, py) in pts {
        x0 = x0.min(px);
        x1 = x1.max(px);
        y0 = y0.min(py);
        y1 = y1.max(py);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let m = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
        (lo - m, hi + m)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + ph - (v - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="600" viewBox="0 0 800 600" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(x0, x1) {
        let px = sx(t);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{TOP}" stroke="#dddddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t));
    }
    for t in ticks(y0, y1) {
        let py = sy(t);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, label(t));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 20.0, escape(x));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = ser.points.iter().map(|&(px, py)| format!("{:.2},{:.2}", sx(px), sy(py))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        for &(px, py) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(px), sy(py));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let name = match group_by {
            Some(g) => format!("{g}={}", ser.label),
            None => ser.label.clone(),
        };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&name));
    }
    s.push_str("</svg>\n");
    s
}

/// Plots `y` against `x`, one line per distinct `group_by` value. Nothing is
/// written when the CSV has no data rows.
pub fn cmd_plot(csv_path: &Path, x: &str, y: &str, group_by: Option<&str>, out: &Path) -> Result<Vec<Series>> {
    let text = std::fs::read(csv_path).map_err(|e| HarnessError::io(csv_path, e))?;
    let series = collect_series(&text, x, y, group_by).map_err(|e| match e {
        HarnessError::Config(_) => HarnessError::EmptyCsv(csv_path.to_path_buf()),
        other => other,
    })?;
    std::fs::write(out, render_svg(&series, x, y, group_by)).map_err(|e| HarnessError::io(out, e))?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "image,budget,snr_db,cbr,psnr_db\na,10,6,0.02,20\na,30,6,0.06,24\nb,10,6,0.02,22\nb,30,6,0.07,26\n";

    #[test]
    fn groups_and_averages() {
        let s = collect_series(CSV.as_bytes(), "cbr", "psnr_db", Some("budget")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "10");
        assert_eq!(s[0].points, vec![(0.02, 21.0)]);
        assert_eq!(s[1].points, vec![(0.06, 24.0), (0.07, 26.0)]);
        let svg = render_svg(&s, "cbr", "psnr_db", Some("budget"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"viewBox="0 0 800 600""#));
        assert_eq!(svg, render_svg(&s, "cbr", "psnr_db", Some("budget")));
    }

    #[test]
    fn numeric_group_order() {
        let csv = "g,x,y\n100,1,1\n30,1,2\n9,1,3\n";
        let s = collect_series(csv.as_bytes(), "x", "y", Some("g")).unwrap();
        let labels: Vec<_> = s.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, vec!["9", "30", "100"]);
    }

    #[test]
    fn unknown_column_and_empty() {
        assert!(matches!(collect_series(CSV.as_bytes(), "cbr", "fid", None), Err(HarnessError::UnknownColumn(c)) if c == "fid"));
        assert!(collect_series(b"image,cbr,psnr_db\n", "cbr", "psnr_db", None).is_err());
    }

    #[test]
    fn tick_spacing() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(label(0.30000000000000004), "0.3");
    }
}
