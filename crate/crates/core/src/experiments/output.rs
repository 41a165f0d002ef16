use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["experiment", "seed", "generation", "n", "alpha", "lambda", "metric", "value"];

/// Metric names a row may carry; a `{...}` suffix is allowed for parameters.
pub const METRICS: &[&str] = &[
    // gmm-stl
    "joint_kl_drift",
    "population_risk",
    "empirical_risk",
    "generalization_gap",
    "shift_proxy",
    "param_distance",
    "variance_floored",
    "n_real",
    "n_synthetic",
    // gauss-collapse
    "w2_to_truth",
    "fitted_var",
    // tf-stability
    "stability_max",
    "stability_p95",
    "stability_median",
    "stability_mean",
    "bound_full",
    "bound_theorem",
    "ratio_full",
    // icl-stl
    "eval_loss",
    // sgd-stability
    "beta_max",
    "beta_p95",
    "beta_median",
    "beta_mean",
    "beta_rate",
    "beta_mean_scaled",
    // bounds
    "thm1_total",
    "thm1_term",
    "thm3_total",
    "thm3_term",
    "thm4_total",
    "thm4_term",
    "tf_bound_full",
    "tf_bound_theorem",
    "drift_factor",
    "alpha_threshold",
    "gmm_stability_bound",
    "gmm_generalization_bound",
    // lambda-star
    "lambda_star",
    "lambda_star_multi_root",
];

/// Part of a metric name before any `{...}` suffix.
pub fn metric_base(metric: &str) -> &str {
    metric.split('{').next().unwrap_or(metric)
}

pub fn is_registered(metric: &str) -> bool {
    METRICS.contains(&metric_base(metric))
}

/// `base{k1=v1;k2=v2}`.
pub fn tagged(base: &str, tags: &[(&str, String)]) -> String {
    if tags.is_empty() {
        return base.to_string();
    }
    let inner: Vec<String> = tags.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{base}{{{}}}", inner.join(";"))
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub generation: usize,
    pub n: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub metric: String,
    pub value: f64,
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for ResultRow {
    fn eq(&self, o: &Self) -> bool {
        self.experiment == o.experiment
            && self.seed == o.seed
            && self.generation == o.generation
            && self.n == o.n
            && same(self.alpha, o.alpha)
            && same(self.lambda, o.lambda)
            && self.metric == o.metric
            && same(self.value, o.value)
    }
}

/// Order used in written files: experiment, seed, generation, metric, then n, alpha, lambda.
pub fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.experiment
        .cmp(&b.experiment)
        .then(a.seed.cmp(&b.seed))
        .then(a.generation.cmp(&b.generation))
        .then(a.metric.cmp(&b.metric))
        .then(a.n.cmp(&b.n))
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.lambda.total_cmp(&b.lambda))
}

/// 17 significant digits; positional for decimal exponents in `[-5, 17)`,
/// scientific otherwise; `nan` for any non-finite value.
pub fn format_value(v: f64) -> String {
    if !v.is_finite() {
        return "nan".to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        return sci;
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if exp >= 0 {
        let split = exp as usize + 1;
        let (int, frac) = digits.split_at(split);
        if frac.is_empty() {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac}")
        }
    } else {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    }
}

fn parse_value(s: &str) -> Option<f64> {
    if s == "nan" {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

/// Renders rows (sorted) as CSV text and counts non-finite values.
pub fn csv_string(rows: &[ResultRow]) -> (String, usize) {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let mut non_finite = 0;
    for r in sorted {
        if !r.value.is_finite() {
            non_finite += 1;
        }
        w.write_record([
            r.experiment.clone(),
            r.seed.to_string(),
            r.generation.to_string(),
            r.n.to_string(),
            format_value(r.alpha),
            format_value(r.lambda),
            r.metric.clone(),
            format_value(r.value),
        ])
        .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    (String::from_utf8(bytes).expect("utf-8 fields"), non_finite)
}

/// Writes rows to `path`; returns the number of values written as `nan`.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<usize> {
    let (text, non_finite) = csv_string(rows);
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(non_finite)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text).map_err(|message| Error::Csv {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<ResultRow>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = k + 2;
        let bad = |field: &str| format!("line {line}: bad {field}");
        rows.push(ResultRow {
            experiment: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            generation: rec[2].parse().map_err(|_| bad("generation"))?,
            n: rec[3].parse().map_err(|_| bad("n"))?,
            alpha: parse_value(&rec[4]).ok_or_else(|| bad("alpha"))?,
            lambda: parse_value(&rec[5]).ok_or_else(|| bad("lambda"))?,
            metric: rec[6].to_string(),
            value: parse_value(&rec[7]).ok_or_else(|| bad("value"))?,
        });
    }
    Ok(rows)
}
