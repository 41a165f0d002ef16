use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::output::{metric_base, ResultRow};
use crate::error::{Error, Result};
use crate::stats::{linear_fit, log_log_fit, mean, median, quantile};

const GROUP_KEYS: [&str; 7] = ["experiment", "seed", "generation", "n", "alpha", "lambda", "metric"];

fn key_value(row: &ResultRow, key: &str) -> String {
    let num = |v: f64| if v.is_nan() { "nan".to_string() } else { format!("{v:?}") };
    match key {
        "experiment" => row.experiment.clone(),
        "seed" => row.seed.to_string(),
        "generation" => row.generation.to_string(),
        "n" => row.n.to_string(),
        "alpha" => num(row.alpha),
        "lambda" => num(row.lambda),
        "metric" => row.metric.clone(),
        _ => unreachable!("keys are checked first"),
    }
}

fn check_keys(keys: &[&str]) -> Result<()> {
    for k in keys {
        if !GROUP_KEYS.contains(k) {
            return Err(Error::MissingGroup(k.to_string()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub key: Vec<(String, String)>,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    /// Mean of a `stability_*` metric over the mean of its `bound_full` twin.
    pub bound_ratio: Option<f64>,
}

/// Per-group mean, median and 95th percentile of `value`.
pub fn summarize(rows: &[ResultRow], group: &[&str]) -> Result<Vec<GroupStats>> {
    check_keys(group)?;
    if rows.is_empty() {
        return Err(Error::MissingGroup("(no rows)".into()));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = group.iter().map(|k| key_value(r, k)).collect();
        groups.entry(key).or_default().push(r.value);
    }
    let metric_pos = group.iter().position(|k| *k == "metric");
    let means: BTreeMap<&Vec<String>, f64> = groups.iter().map(|(k, v)| (k, mean(v))).collect();
    Ok(groups
        .iter()
        .map(|(key, values)| {
            let bound_ratio = metric_pos.and_then(|pos| {
                let metric = &key[pos];
                let base = metric_base(metric);
                if !base.starts_with("stability_") {
                    return None;
                }
                let mut twin = key.clone();
                twin[pos] = format!("bound_full{}", &metric[base.len()..]);
                means.get(&twin).map(|b| mean(values) / b)
            });
            GroupStats {
                key: group.iter().map(|k| k.to_string()).zip(key.iter().cloned()).collect(),
                count: values.len(),
                mean: mean(values),
                median: median(values),
                p95: quantile(values, 0.95),
                bound_ratio,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// `log value` against `log n`.
    LogLog,
    /// `value` against the generation index, generations `>= 1`.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub key: Vec<(String, String)>,
    pub kind: FitKind,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits the per-`x` group means against `x` (`n` or `generation`) within each group.
pub fn fit_slopes(rows: &[ResultRow], group: &[&str], x: &str) -> Result<Vec<SlopeFit>> {
    check_keys(group)?;
    let kind = match x {
        "n" => FitKind::LogLog,
        "generation" => FitKind::Linear,
        other => return Err(Error::MissingGroup(format!("{other} (fits run against n or generation)"))),
    };
    let group: Vec<&str> = group.iter().copied().filter(|k| *k != x).collect();
    let mut cells: BTreeMap<Vec<String>, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let xv = if kind == FitKind::LogLog { r.n } else { r.generation };
        if kind == FitKind::Linear && xv == 0 {
            continue;
        }
        let key = group.iter().map(|k| key_value(r, k)).collect();
        cells.entry(key).or_default().entry(xv).or_default().push(r.value);
    }
    let mut out = Vec::new();
    for (key, by_x) in cells {
        let xs: Vec<f64> = by_x.keys().map(|&v| v as f64).collect();
        let ys: Vec<f64> = by_x.values().map(|v| mean(v)).collect();
        if xs.len() < 2 {
            continue;
        }
        let fit = match kind {
            FitKind::LogLog => {
                if ys.iter().any(|y| !(*y > 0.0)) {
                    continue;
                }
                log_log_fit(&xs, &ys)
            }
            FitKind::Linear => linear_fit(&xs, &ys),
        };
        out.push(SlopeFit {
            key: group.iter().map(|k| k.to_string()).zip(key).collect(),
            kind,
            points: xs.len(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
        });
    }
    Ok(out)
}

fn aligned(header: Vec<String>, body: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

fn g(v: f64) -> String {
    format!("{v:.6e}")
}

pub fn render_summary(stats: &[GroupStats]) -> String {
    let Some(first) = stats.first() else {
        return String::new();
    };
    let with_ratio = stats.iter().any(|s| s.bound_ratio.is_some());
    let mut header: Vec<String> = first.key.iter().map(|(k, _)| k.clone()).collect();
    header.extend(["count", "mean", "median", "p95"].map(String::from));
    if with_ratio {
        header.push("ratio_to_bound".into());
    }
    let body = stats
        .iter()
        .map(|s| {
            let mut row: Vec<String> = s.key.iter().map(|(_, v)| v.clone()).collect();
            row.extend([s.count.to_string(), g(s.mean), g(s.median), g(s.p95)]);
            if with_ratio {
                row.push(s.bound_ratio.map(g).unwrap_or_else(|| "-".into()));
            }
            row
        })
        .collect();
    aligned(header, body)
}

pub fn render_fits(fits: &[SlopeFit]) -> String {
    let Some(first) = fits.first() else {
        return String::new();
    };
    let mut header: Vec<String> = first.key.iter().map(|(k, _)| k.clone()).collect();
    header.extend(["fit", "points", "slope", "intercept", "r2"].map(String::from));
    let body = fits
        .iter()
        .map(|f| {
            let mut row: Vec<String> = f.key.iter().map(|(_, v)| v.clone()).collect();
            let kind = match f.kind {
                FitKind::LogLog => "log-log vs n",
                FitKind::Linear => "linear vs generation",
            };
            row.extend([kind.to_string(), f.points.to_string(), g(f.slope), g(f.intercept), g(f.r_squared)]);
            row
        })
        .collect();
    aligned(header, body)
}

/// Rows as an aligned table of their identifying columns and value.
pub fn render_rows(rows: &[ResultRow]) -> String {
    let header = ["generation", "n", "alpha", "lambda", "metric", "value"].map(String::from).to_vec();
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.generation.to_string(),
                r.n.to_string(),
                key_value(r, "alpha"),
                key_value(r, "lambda"),
                r.metric.clone(),
                g(r.value),
            ]
        })
        .collect();
    aligned(header, body)
}
