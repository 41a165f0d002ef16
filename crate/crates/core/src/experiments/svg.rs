//! Plain line charts of seed-mean metrics, one file per metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::output::ResultRow;
use crate::error::{Error, Result};
use crate::stats::mean;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// One chart of `rows` (a single metric): x is the generation when more than
/// one generation is present, otherwise `n`.
pub fn chart(metric: &str, rows: &[&ResultRow]) -> String {
    let by_generation = rows.iter().map(|r| r.generation).collect::<std::collections::BTreeSet<_>>().len() > 1;
    let x_label = if by_generation { "generation" } else { "n" };
    let mut lines: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let (x, label) = if by_generation {
            (r.generation, format!("n={} alpha={}", r.n, r.alpha))
        } else {
            (r.n, format!("alpha={} lambda={}", r.alpha, r.lambda))
        };
        if r.value.is_finite() {
            lines.entry(label).or_default().entry(x).or_default().push(r.value);
        }
    }
    let points: Vec<(String, Vec<(f64, f64)>)> = lines
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|(x, ys)| (x as f64, mean(&ys))).collect()))
        .collect();
    let all = points.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(metric));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="middle">{x0}</text>"#, bottom + 15.0);
    let _ = writeln!(s, r#"<text x="{right}" y="{}" text-anchor="middle">{x1}</text>"#, bottom + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.3e}</text>"#, left - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3e}</text>"#, left - 4.0, top + 4.0);
    for (k, (label, pts)) in points.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            right - 150.0,
            top + 14.0 * k as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes one `<experiment>_<metric>.svg` per metric into `dir`.
pub fn write_svgs(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut by_metric: BTreeMap<(&str, &str), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_metric.entry((&r.experiment, &r.metric)).or_default().push(r);
    }
    let mut written = Vec::new();
    for ((experiment, metric), group) in by_metric {
        let path = dir.join(format!("{}_{}.svg", sanitize(experiment), sanitize(metric)));
        std::fs::write(&path, chart(metric, &group)).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}
