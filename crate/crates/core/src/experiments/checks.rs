//! Pass/fail criteria evaluated on experiment rows, shared by `run --check`
//! and the acceptance suite.

use std::collections::BTreeMap;

use super::config::{ExperimentConfig, ExperimentParams};
use super::output::{metric_base, ResultRow};
use crate::stats::{linear_fit, log_log_fit, mean, median, spearman};

pub const DRIFT_MIN_R2: f64 = 0.8;
pub const CONTAINMENT_MAX_RATIO: f64 = 2.0;
pub const GAP_SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);
pub const COLLAPSE_MIN_SPEARMAN: f64 = 0.9;
pub const SGD_MAX_SPREAD: f64 = 3.0;
pub const ICL_FULL_MIN_GROWTH: f64 = 3.0;
pub const ICL_MIXED_MAX_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn tag_suffix(metric: &str) -> &str {
    &metric[metric_base(metric).len()..]
}

/// Values of `metric_base` keyed by `(suffix, n, alpha bits, generation)`.
fn tagged_values(rows: &[ResultRow], base: &str) -> BTreeMap<(String, usize, u64, usize), Vec<f64>> {
    let mut out: BTreeMap<_, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| metric_base(&r.metric) == base) {
        out.entry((tag_suffix(&r.metric).to_string(), r.n, r.alpha.to_bits(), r.generation))
            .or_default()
            .push(r.value);
    }
    out
}

/// Every empirical transformer distance stays below the full-form bound.
pub fn tf_domination(rows: &[ResultRow]) -> CheckResult {
    let maxes = tagged_values(rows, "stability_max");
    let bounds = tagged_values(rows, "bound_full");
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (key, vals) in &maxes {
        let bound = bounds.get(key).map(|b| b[0]).unwrap_or(f64::NAN);
        for v in vals {
            worst = worst.max(v / bound);
            if !(*v <= bound) {
                violations += 1;
            }
        }
    }
    CheckResult::new(
        "transformer bound domination",
        violations == 0 && !maxes.is_empty(),
        format!("{} cells, {violations} violations, worst empirical/bound ratio {worst:.3e}", maxes.len()),
    )
}

/// Median stability at the largest `n` is below the median at the smallest `n`
/// in every (tags, alpha, generation >= 1) cell.
pub fn tf_scaling(rows: &[ResultRow]) -> CheckResult {
    let medians = tagged_values(rows, "stability_median");
    let mut by_cell: BTreeMap<(String, u64, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for ((tag, n, a, g), v) in &medians {
        if *g >= 1 {
            by_cell.entry((tag.clone(), *a, *g)).or_default().insert(*n, mean(v));
        }
    }
    let mut failed = Vec::new();
    for ((tag, a, g), by_n) in &by_cell {
        let (small, large) = (by_n.values().next().unwrap(), by_n.values().last().unwrap());
        if by_n.len() < 2 || !(large < small) {
            failed.push(format!("{tag} alpha={} i={g}", f64::from_bits(*a)));
        }
    }
    CheckResult::new(
        "stability decreases with n",
        failed.is_empty() && !by_cell.is_empty(),
        if failed.is_empty() {
            format!("{} cells", by_cell.len())
        } else {
            format!("failing cells: {}", failed.join(", "))
        },
    )
}

/// Seed-level values of one metric, keyed by (n, alpha bits) then generation.
fn series(rows: &[ResultRow], metric: &str) -> BTreeMap<(usize, u64), BTreeMap<usize, Vec<f64>>> {
    let mut out: BTreeMap<_, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        out.entry((r.n, r.alpha.to_bits()))
            .or_default()
            .entry(r.generation)
            .or_default()
            .push(r.value);
    }
    out
}

/// At `alpha = 0` the seed-mean drift grows linearly over generations `1..`.
pub fn gmm_collapse(rows: &[ResultRow]) -> Option<CheckResult> {
    let s = series(rows, "joint_kl_drift");
    let mut details = Vec::new();
    let mut ok = true;
    let mut any = false;
    for ((n, a), by_g) in &s {
        if f64::from_bits(*a) != 0.0 || by_g.len() < 3 {
            continue;
        }
        any = true;
        let (xs, ys): (Vec<f64>, Vec<f64>) = by_g
            .iter()
            .filter(|(g, _)| **g >= 1)
            .map(|(g, v)| (*g as f64, mean(v)))
            .unzip();
        let fit = linear_fit(&xs, &ys);
        ok &= fit.slope > 0.0 && fit.r_squared >= DRIFT_MIN_R2;
        details.push(format!("n={n}: slope {:.3e}, R2 {:.4}", fit.slope, fit.r_squared));
    }
    any.then(|| CheckResult::new("gmm drift grows linearly at alpha=0", ok, details.join("; ")))
}

/// At `alpha > 0` the median drift at the last generation is at most twice
/// the median drift at generation 1.
pub fn gmm_containment(rows: &[ResultRow]) -> Option<CheckResult> {
    let s = series(rows, "joint_kl_drift");
    let mut details = Vec::new();
    let mut ok = true;
    let mut any = false;
    for ((n, a), by_g) in &s {
        let alpha = f64::from_bits(*a);
        let (Some(first), Some((&last_g, last))) = (by_g.get(&1), by_g.iter().next_back()) else {
            continue;
        };
        if alpha == 0.0 || last_g < 2 {
            continue;
        }
        any = true;
        let ratio = median(last) / median(first);
        ok &= ratio <= CONTAINMENT_MAX_RATIO;
        details.push(format!("n={n} alpha={alpha}: median drift i={last_g} / i=1 = {ratio:.3}"));
    }
    any.then(|| CheckResult::new("gmm drift contained at alpha>0", ok, details.join("; ")))
}

/// Log-log slope of the mean generalization gap against `n` at the last generation.
pub fn gmm_gap_rate(rows: &[ResultRow]) -> Option<CheckResult> {
    let s = series(rows, "generalization_gap");
    let mut by_alpha: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for ((n, a), by_g) in &s {
        if let Some((_, last)) = by_g.iter().next_back() {
            by_alpha.entry(*a).or_default().push((*n as f64, mean(last)));
        }
    }
    let mut details = Vec::new();
    let mut ok = true;
    let mut any = false;
    for (a, pts) in by_alpha {
        if pts.len() < 3 {
            continue;
        }
        any = true;
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let fit = log_log_fit(&xs, &ys);
        ok &= (GAP_SLOPE_RANGE.0..=GAP_SLOPE_RANGE.1).contains(&fit.slope);
        details.push(format!("alpha={}: slope {:.4}, R2 {:.4}", f64::from_bits(a), fit.slope, fit.r_squared));
    }
    any.then(|| CheckResult::new("gmm generalization gap ~ n^-1/2", ok, details.join("; ")))
}

/// Spearman correlation of the seed-mean W2 distance with the generation index.
pub fn gauss_monotone(rows: &[ResultRow]) -> CheckResult {
    let s = series(rows, "w2_to_truth");
    let mut ok = !s.is_empty();
    let mut details = Vec::new();
    for ((n, a), by_g) in &s {
        let (xs, ys): (Vec<f64>, Vec<f64>) = by_g
            .iter()
            .filter(|(g, _)| **g >= 1)
            .map(|(g, v)| (*g as f64, mean(v)))
            .unzip();
        let rho = spearman(&xs, &ys);
        ok &= rho > COLLAPSE_MIN_SPEARMAN;
        details.push(format!("n={n} alpha={}: spearman {rho:.4}", f64::from_bits(*a)));
    }
    CheckResult::new("gaussian refit drift increases", ok, details.join("; "))
}

/// Spread of `beta_hat(n) n / log n` across the sampled sizes.
pub fn sgd_rate(rows: &[ResultRow]) -> CheckResult {
    let vals: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.metric == "beta_mean_scaled")
        .map(|r| (r.n, r.value))
        .collect();
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (n, v) in vals {
        by_n.entry(n).or_default().push(v);
    }
    let scaled: Vec<f64> = by_n.values().map(|v| mean(v)).collect();
    let max = scaled.iter().copied().fold(f64::MIN, f64::max);
    let min = scaled.iter().copied().fold(f64::MAX, f64::min);
    let spread = max / min;
    CheckResult::new(
        "sgd stability ~ log n / n",
        scaled.len() >= 2 && spread <= SGD_MAX_SPREAD,
        format!(
            "beta*n/log n = [{}], max/min {spread:.3}",
            scaled.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Mean eval loss per (alpha, loop) averaged over seeds.
fn icl_means(rows: &[ResultRow]) -> BTreeMap<u64, BTreeMap<usize, f64>> {
    let s = series(rows, "eval_loss");
    let mut out: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
    for ((_, a), by_g) in s {
        for (g, v) in by_g {
            out.entry(a).or_default().insert(g, mean(&v));
        }
    }
    out
}

/// Fully synthetic loss grows at least 3x, the mixed loss at most 1.5x, and
/// the final fully synthetic loss exceeds the final mixed loss.
pub fn icl_trend(rows: &[ResultRow]) -> Option<CheckResult> {
    let means = icl_means(rows);
    let full = means.get(&0.0f64.to_bits())?;
    let mixed = means.get(&0.5f64.to_bits())?;
    let growth = |m: &BTreeMap<usize, f64>| m.values().last().unwrap() / m.values().next().unwrap();
    let (gf, gm) = (growth(full), growth(mixed));
    let (lf, lm) = (*full.values().last().unwrap(), *mixed.values().last().unwrap());
    Some(CheckResult::new(
        "icl loss: full synthetic grows, mixed contained",
        gf >= ICL_FULL_MIN_GROWTH && gm <= ICL_MIXED_MAX_GROWTH && lf > lm,
        format!("full last/first {gf:.3} (final {lf:.4}); mixed last/first {gm:.3} (final {lm:.4})"),
    ))
}

/// `lambda*` is nonincreasing in `n` for every comparison constant.
pub fn lambda_star_monotone(rows: &[ResultRow]) -> CheckResult {
    let mut by_c: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| metric_base(&r.metric) == "lambda_star") {
        by_c.entry(tag_suffix(&r.metric)).or_default().insert(r.n, r.value);
    }
    let mut ok = !by_c.is_empty();
    let mut details = Vec::new();
    for (c, by_n) in &by_c {
        let vals: Vec<f64> = by_n.values().copied().collect();
        ok &= vals.iter().all(|v| v.is_finite()) && vals.windows(2).all(|w| w[1] <= w[0]);
        details.push(format!(
            "{c}: [{}]",
            vals.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    CheckResult::new("lambda* nonincreasing in n", ok, details.join("; "))
}

/// Every bound value is finite and nonnegative.
pub fn bounds_sane(rows: &[ResultRow]) -> CheckResult {
    let bad = rows.iter().filter(|r| !(r.value >= 0.0 && r.value.is_finite())).count();
    CheckResult::new(
        "bound values finite and nonnegative",
        bad == 0,
        format!("{} values, {bad} bad", rows.len()),
    )
}

/// The checks that apply to this experiment and its rows.
pub fn run_checks(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<CheckResult> {
    match cfg.params {
        ExperimentParams::GmmStl(_) => [gmm_collapse(rows), gmm_containment(rows), gmm_gap_rate(rows)]
            .into_iter()
            .flatten()
            .collect(),
        ExperimentParams::GaussCollapse(_) => vec![gauss_monotone(rows)],
        ExperimentParams::TfStability(_) => vec![tf_domination(rows), tf_scaling(rows)],
        ExperimentParams::IclStl(_) => icl_trend(rows).into_iter().collect(),
        ExperimentParams::SgdStability(_) => vec![sgd_rate(rows)],
        ExperimentParams::Bounds(_) => vec![bounds_sane(rows)],
        ExperimentParams::LambdaStar(_) => vec![lambda_star_monotone(rows)],
    }
}
