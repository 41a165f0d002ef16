//! Sectioned `key = value` configuration (JSON accepted too), with typed
//! per-experiment parameter sets and a canonical emitter.
//!
//! ```text
//! schema_version = 1
//! experiment = gmm-stl
//!
//! [run]
//! seed = 0
//! seeds = 20
//!
//! [params]
//! n = 500
//! alpha = 0, 0.5
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A parameter type that can be read from and written to a config value.
pub trait ParamValue: Sized {
    fn parse_value(raw: &str) -> std::result::Result<Self, String>;
    fn emit_value(&self) -> String;
}

macro_rules! scalar_param {
    ($($t:ty => $what:literal),*) => {$(
        impl ParamValue for $t {
            fn parse_value(raw: &str) -> std::result::Result<Self, String> {
                raw.trim().parse().map_err(|_| format!("expected {}, found {:?}", $what, raw.trim()))
            }
            fn emit_value(&self) -> String {
                format!("{:?}", self)
            }
        }
    )*};
}

scalar_param!(usize => "a nonnegative integer", u64 => "a nonnegative integer", f64 => "a number", bool => "true or false");

impl ParamValue for String {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        let s = raw.trim();
        if s.is_empty() || s.contains(',') {
            return Err(format!("expected a single word, found {s:?}"));
        }
        Ok(s.to_string())
    }
    fn emit_value(&self) -> String {
        self.clone()
    }
}

impl<T: ParamValue> ParamValue for Vec<T> {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        let items: Vec<&str> = raw.split(',').map(str::trim).collect();
        if items.iter().any(|s| s.is_empty()) {
            return Err(format!("expected a comma-separated list, found {:?}", raw.trim()));
        }
        items.into_iter().map(T::parse_value).collect()
    }
    fn emit_value(&self) -> String {
        self.iter().map(T::emit_value).collect::<Vec<_>>().join(", ")
    }
}

/// Access to an experiment's parameters by key.
pub trait ParamSet: Default {
    /// Returns `Ok(false)` when `key` is not a parameter of this set.
    fn set(&mut self, key: &str, raw: &str) -> std::result::Result<bool, String>;
    fn entries(&self) -> Vec<(&'static str, String)>;
    fn validate(&self) -> Result<()>;
}

macro_rules! params {
    (
        $(#[$meta:meta])*
        $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr),* $(,)? }
        validate(|$p:ident| $body:block)
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name { $($(#[$fmeta])* pub $field: $ty),* }

        impl Default for $name {
            fn default() -> Self {
                $name { $($field: $default),* }
            }
        }

        impl ParamSet for $name {
            fn set(&mut self, key: &str, raw: &str) -> std::result::Result<bool, String> {
                match key {
                    $(stringify!($field) => {
                        self.$field = <$ty as ParamValue>::parse_value(raw)?;
                        Ok(true)
                    })*
                    _ => Ok(false),
                }
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), self.$field.emit_value())),*]
            }

            fn validate(&self) -> Result<()> {
                let $p = self;
                $body
            }
        }
    };
}

fn unit_interval(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid(name, "out of [0,1]"));
    }
    Ok(())
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, "must be positive"));
    }
    Ok(())
}

fn nonempty<T>(name: &'static str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(name, "must list at least one value"));
    }
    Ok(())
}

fn at_least(name: &'static str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return Err(Error::invalid(name, format!("must be at least {min}")));
    }
    Ok(())
}

fn one_of(name: &'static str, v: &str, allowed: &[&str]) -> Result<()> {
    if !allowed.contains(&v) {
        return Err(Error::invalid(name, format!("must be one of {}", allowed.join(", "))));
    }
    Ok(())
}

params! {
    /// Mixture generator and mean classifier under a fixed-ratio loop.
    GmmStlParams {
        n: Vec<usize> = vec![500],
        d: usize = 2,
        alpha: Vec<f64> = vec![0.5],
        generations: usize = 10,
        sigma2: f64 = 1.0,
        /// `sqrt` (ceil(sqrt(n))), `all`, or a count.
        classifier_m: String = "sqrt".into(),
        stratified: bool = false,
        fixed_real_subset: bool = false,
        oversample_factor: f64 = 1.0,
    }
    validate(|p| {
        nonempty("n", &p.n)?;
        nonempty("alpha", &p.alpha)?;
        unit_interval("alpha", &p.alpha)?;
        for &n in &p.n {
            at_least("n", n, 4)?;
        }
        at_least("d", p.d, 1)?;
        positive("sigma2", p.sigma2)?;
        if p.classifier_m != "sqrt" && p.classifier_m != "all" {
            let m: usize = p
                .classifier_m
                .parse()
                .map_err(|_| Error::invalid("classifier_m", "must be sqrt, all or a count"))?;
            at_least("classifier_m", m, 1)?;
        }
        if !(p.oversample_factor >= 1.0 && p.oversample_factor.is_finite()) {
            return Err(Error::invalid("oversample_factor", "must be >= 1"));
        }
        Ok(())
    })
}

impl GmmStlParams {
    /// Classifier subsample size for a dataset of `n` points; `None` means all.
    pub fn classifier_size(&self, n: usize) -> Option<usize> {
        match self.classifier_m.as_str() {
            "sqrt" => Some((n as f64).sqrt().ceil() as usize),
            "all" => None,
            m => m.parse().ok(),
        }
    }
}

params! {
    /// One-dimensional Gaussian refitted on its own samples.
    GaussCollapseParams {
        n: usize = 100,
        generations: usize = 20,
        mean: f64 = 0.0,
        var: f64 = 1.0,
        alpha: f64 = 0.0,
    }
    validate(|p| {
        at_least("n", p.n, 2)?;
        positive("var", p.var)?;
        unit_interval("alpha", &[p.alpha])?;
        if !p.mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        Ok(())
    })
}

params! {
    /// Coupled transformer chains over a grid of sizes, depths and norm caps.
    TfStabilityParams {
        d: usize = 5,
        n: Vec<usize> = vec![8, 16, 32],
        layers: Vec<usize> = vec![1, 2],
        b_w: Vec<f64> = vec![0.25, 0.5],
        alpha: Vec<f64> = vec![0.0, 0.25, 0.5],
        generations: usize = 3,
        trials: usize = 50,
        coupling: String = "shared".into(),
        fixed_real_subset: bool = true,
        replace: String = "retained".into(),
    }
    validate(|p| {
        at_least("d", p.d, 1)?;
        nonempty("n", &p.n)?;
        nonempty("layers", &p.layers)?;
        nonempty("b_w", &p.b_w)?;
        nonempty("alpha", &p.alpha)?;
        unit_interval("alpha", &p.alpha)?;
        for &n in &p.n {
            at_least("n", n, 1)?;
        }
        for &l in &p.layers {
            at_least("layers", l, 1)?;
        }
        for &b in &p.b_w {
            positive("b_w", b)?;
        }
        at_least("trials", p.trials, 1)?;
        one_of("replace", &p.replace, &["retained", "uniform"])?;
        if p.replace == "retained" && !p.fixed_real_subset {
            return Err(Error::invalid("replace", "retained needs fixed_real_subset = true"));
        }
        one_of("coupling", &p.coupling, &["shared", "independent"])
    })
}

params! {
    /// In-context regression loop with the least-squares surrogate.
    IclStlParams {
        d: usize = 5,
        context: usize = 40,
        loops: usize = 6,
        tasks: usize = 1024,
        alpha: Vec<f64> = vec![0.0, 0.5],
        label_noise: f64 = 0.5,
        ridge: f64 = 0.0,
        /// `gaussian` or `unit-ball`.
        query_law: String = "gaussian".into(),
        /// `fresh` draws new real examples every loop, `initial` resamples `S_0`.
        real_source: String = "fresh".into(),
    }
    validate(|p| {
        at_least("d", p.d, 1)?;
        at_least("context", p.context, 1)?;
        at_least("loops", p.loops, 1)?;
        at_least("tasks", p.tasks, 1)?;
        nonempty("alpha", &p.alpha)?;
        unit_interval("alpha", &p.alpha)?;
        if !(p.label_noise >= 0.0 && p.label_noise.is_finite()) {
            return Err(Error::invalid("label_noise", "must be nonnegative"));
        }
        if !(p.ridge >= 0.0 && p.ridge.is_finite()) {
            return Err(Error::invalid("ridge", "must be nonnegative"));
        }
        one_of("real_source", &p.real_source, &["fresh", "initial"])?;
        one_of("query_law", &p.query_law, &["gaussian", "unit-ball"])
    })
}

params! {
    /// Uniform stability of projected logistic SGD across sample sizes.
    SgdStabilityParams {
        n: Vec<usize> = vec![64, 128, 256, 512],
        d: usize = 5,
        trials: usize = 200,
        probe: usize = 512,
        kappa: f64 = 0.25,
        radius: f64 = 10.0,
        /// Iterations per training run, as a multiple of `n`.
        t_factor: usize = 4,
        step_scale: f64 = 1.0,
        /// Norm of the logistic teacher vector.
        teacher_norm: f64 = 2.0,
        coupling: String = "shared".into(),
    }
    validate(|p| {
        nonempty("n", &p.n)?;
        for &n in &p.n {
            at_least("n", n, 2)?;
        }
        at_least("d", p.d, 1)?;
        at_least("trials", p.trials, 1)?;
        at_least("probe", p.probe, 1)?;
        at_least("t_factor", p.t_factor, 1)?;
        positive("kappa", p.kappa)?;
        positive("radius", p.radius)?;
        positive("step_scale", p.step_scale)?;
        if !(p.teacher_norm >= 0.0 && p.teacher_norm.is_finite()) {
            return Err(Error::invalid("teacher_norm", "must be nonnegative"));
        }
        one_of("coupling", &p.coupling, &["shared", "independent"])
    })
}

params! {
    /// Bound evaluators over a grid of `(n, alpha, i)`.
    BoundsParams {
        n: Vec<usize> = vec![100, 1000, 10000],
        alpha: Vec<f64> = vec![0.0, 0.25, 0.5, 1.0],
        i: Vec<usize> = vec![1, 5, 10],
        lambda: f64 = 1.0,
        delta: f64 = 0.1,
        m: f64 = 1.0,
        rho: f64 = 1.0,
        kappa: f64 = 1.0,
        b_w: f64 = 0.5,
        layers: usize = 2,
        d: usize = 2,
        d_tv: f64 = 0.01,
        beta_n: f64 = 0.01,
        gamma_n_i: f64 = 0.01,
        proof_form: bool = false,
    }
    validate(|p| {
        nonempty("n", &p.n)?;
        nonempty("alpha", &p.alpha)?;
        nonempty("i", &p.i)?;
        unit_interval("alpha", &p.alpha)?;
        for &n in &p.n {
            at_least("n", n, 1)?;
        }
        positive("lambda", p.lambda)?;
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(Error::invalid("delta", "out of (0,1)"));
        }
        at_least("layers", p.layers, 1)?;
        at_least("d", p.d, 1)?;
        for (name, v) in [("m", p.m), ("rho", p.rho), ("kappa", p.kappa), ("b_w", p.b_w), ("d_tv", p.d_tv), ("beta_n", p.beta_n), ("gamma_n_i", p.gamma_n_i)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be nonnegative"));
            }
        }
        Ok(())
    })
}

params! {
    /// `lambda*` as a function of `n` for several comparison constants.
    LambdaStarParams {
        n: Vec<usize> = vec![100, 1000, 10000],
        i: usize = 5,
        rho: f64 = 1.0,
        m: f64 = 1.0,
        b_w: f64 = 0.5,
        layers: usize = 2,
        delta: f64 = 0.1,
        c: Vec<f64> = vec![0.5, 1.0, 2.0],
    }
    validate(|p| {
        nonempty("n", &p.n)?;
        nonempty("c", &p.c)?;
        for &n in &p.n {
            at_least("n", n, 1)?;
        }
        for &c in &p.c {
            positive("c", c)?;
        }
        at_least("layers", p.layers, 1)?;
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(Error::invalid("delta", "out of (0,1)"));
        }
        for (name, v) in [("rho", p.rho), ("m", p.m), ("b_w", p.b_w)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be nonnegative"));
            }
        }
        Ok(())
    })
}

/// Parameters of the selected experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentParams {
    GmmStl(GmmStlParams),
    GaussCollapse(GaussCollapseParams),
    TfStability(TfStabilityParams),
    IclStl(IclStlParams),
    SgdStability(SgdStabilityParams),
    Bounds(BoundsParams),
    LambdaStar(LambdaStarParams),
}

pub const EXPERIMENTS: [&str; 7] = [
    "gmm-stl",
    "gauss-collapse",
    "tf-stability",
    "icl-stl",
    "sgd-stability",
    "bounds",
    "lambda-star",
];

impl ExperimentParams {
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "gmm-stl" => ExperimentParams::GmmStl(Default::default()),
            "gauss-collapse" => ExperimentParams::GaussCollapse(Default::default()),
            "tf-stability" => ExperimentParams::TfStability(Default::default()),
            "icl-stl" => ExperimentParams::IclStl(Default::default()),
            "sgd-stability" => ExperimentParams::SgdStability(Default::default()),
            "bounds" => ExperimentParams::Bounds(Default::default()),
            "lambda-star" => ExperimentParams::LambdaStar(Default::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentParams::GmmStl(_) => "gmm-stl",
            ExperimentParams::GaussCollapse(_) => "gauss-collapse",
            ExperimentParams::TfStability(_) => "tf-stability",
            ExperimentParams::IclStl(_) => "icl-stl",
            ExperimentParams::SgdStability(_) => "sgd-stability",
            ExperimentParams::Bounds(_) => "bounds",
            ExperimentParams::LambdaStar(_) => "lambda-star",
        }
    }

    /// Replicates run when `[run] seeds` is not given.
    fn default_seeds(&self) -> usize {
        match self {
            ExperimentParams::GmmStl(_) => 20,
            ExperimentParams::GaussCollapse(_) => 100,
            ExperimentParams::IclStl(_) => 10,
            _ => 1,
        }
    }

    fn set(&mut self, key: &str, raw: &str) -> std::result::Result<bool, String> {
        match self {
            ExperimentParams::GmmStl(p) => p.set(key, raw),
            ExperimentParams::GaussCollapse(p) => p.set(key, raw),
            ExperimentParams::TfStability(p) => p.set(key, raw),
            ExperimentParams::IclStl(p) => p.set(key, raw),
            ExperimentParams::SgdStability(p) => p.set(key, raw),
            ExperimentParams::Bounds(p) => p.set(key, raw),
            ExperimentParams::LambdaStar(p) => p.set(key, raw),
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        match self {
            ExperimentParams::GmmStl(p) => p.entries(),
            ExperimentParams::GaussCollapse(p) => p.entries(),
            ExperimentParams::TfStability(p) => p.entries(),
            ExperimentParams::IclStl(p) => p.entries(),
            ExperimentParams::SgdStability(p) => p.entries(),
            ExperimentParams::Bounds(p) => p.entries(),
            ExperimentParams::LambdaStar(p) => p.entries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentParams::GmmStl(p) => p.validate(),
            ExperimentParams::GaussCollapse(p) => p.validate(),
            ExperimentParams::TfStability(p) => p.validate(),
            ExperimentParams::IclStl(p) => p.validate(),
            ExperimentParams::SgdStability(p) => p.validate(),
            ExperimentParams::Bounds(p) => p.validate(),
            ExperimentParams::LambdaStar(p) => p.validate(),
        }
    }
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub params: ExperimentParams,
    /// Master seed; replicate `k` runs with seed `seed + k`.
    pub seed: u64,
    pub seeds: usize,
}

impl ExperimentConfig {
    pub fn new(params: ExperimentParams) -> Self {
        let seeds = params.default_seeds();
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            params,
            seed: 0,
            seeds,
        }
    }

    pub fn experiment(&self) -> &'static str {
        self.params.name()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("seeds", "must be at least 1"));
        }
        self.params.validate()
    }
}

fn config_error(line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn attach_line(e: Error, line: Option<usize>) -> Error {
    match e {
        Error::InvalidParameter { .. } => config_error(line, e.to_string()),
        other => other,
    }
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: Option<usize>,
}

fn assemble(entries: Vec<Entry>) -> Result<ExperimentConfig> {
    let mut seen: BTreeMap<(String, String), Option<usize>> = BTreeMap::new();
    for e in &entries {
        if seen.insert((e.section.clone(), e.key.clone()), e.line).is_some() {
            return Err(config_error(e.line, format!("duplicate key {}", e.key)));
        }
    }
    let find = |section: &str, key: &str| entries.iter().find(|e| e.section == section && e.key == key);

    let Some(exp) = find("", "experiment") else {
        return Err(config_error(None, "missing required key experiment"));
    };
    let params = ExperimentParams::default_for(exp.value.trim()).ok_or_else(|| {
        config_error(
            exp.line,
            format!("experiment: unknown experiment {:?}; expected one of {}", exp.value.trim(), EXPERIMENTS.join(", ")),
        )
    })?;
    let mut cfg = ExperimentConfig::new(params);
    let mut param_lines: BTreeMap<&str, Option<usize>> = BTreeMap::new();

    for e in &entries {
        let fail = |msg: String| config_error(e.line, format!("{}: {}", e.key, msg));
        match (e.section.as_str(), e.key.as_str()) {
            ("", "experiment") => {}
            ("", "schema_version") => {
                let v: u32 = e.value.trim().parse().map_err(|_| fail("expected an integer".into()))?;
                if v != SCHEMA_VERSION {
                    return Err(fail(format!("unsupported version {v}; this build reads {SCHEMA_VERSION}")));
                }
                cfg.schema_version = v;
            }
            ("run", "seed") => cfg.seed = u64::parse_value(&e.value).map_err(fail)?,
            ("run", "seeds") => cfg.seeds = usize::parse_value(&e.value).map_err(fail)?,
            ("params", key) => {
                if !cfg.params.set(key, &e.value).map_err(fail)? {
                    return Err(fail(format!("unknown key for experiment {}", cfg.experiment())));
                }
                param_lines.insert(key, e.line);
            }
            (section, key) => {
                let place = if section.is_empty() { "top level".to_string() } else { format!("section [{section}]") };
                return Err(config_error(e.line, format!("unknown key {key} in {place}")));
            }
        }
    }

    if let Err(err) = cfg.validate() {
        let line = match &err {
            Error::InvalidParameter { name, .. } => param_lines
                .get(*name)
                .copied()
                .flatten()
                .or_else(|| find("run", name).and_then(|e| e.line)),
            _ => None,
        };
        return Err(attach_line(err, line));
    }
    Ok(cfg)
}

/// Parses a configuration in either format; text starting with `{` is JSON.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

fn parse_text(text: &str) -> Result<ExperimentConfig> {
    let mut section = String::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_error(Some(line), "malformed section header"))?
                .trim();
            if name != "run" && name != "params" {
                return Err(config_error(Some(line), format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_error(Some(line), "expected key = value"))?;
        entries.push(Entry {
            section: section.clone(),
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: Some(line),
        });
    }
    assemble(entries)
}

fn json_scalar(v: &serde_json::Value, key: &str) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        serde_json::Value::Array(items) => Ok(items
            .iter()
            .map(|x| json_scalar(x, key))
            .collect::<Result<Vec<_>>>()?
            .join(", ")),
        _ => Err(config_error(None, format!("{key}: unsupported JSON value"))),
    }
}

fn parse_json(text: &str) -> Result<ExperimentConfig> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| config_error(Some(e.line()), format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| config_error(None, "top-level JSON value must be an object"))?;
    let mut entries = Vec::new();
    for (key, value) in obj {
        match (key.as_str(), value) {
            ("run" | "params", serde_json::Value::Object(inner)) => {
                for (k, v) in inner {
                    entries.push(Entry {
                        section: key.clone(),
                        key: k.clone(),
                        value: json_scalar(v, k)?,
                        line: None,
                    });
                }
            }
            _ => entries.push(Entry {
                section: String::new(),
                key: key.clone(),
                value: json_scalar(value, key)?,
                line: None,
            }),
        }
    }
    assemble(entries)
}

/// Canonical text form listing every effective value.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema_version = {}", cfg.schema_version);
    let _ = writeln!(out, "experiment = {}", cfg.experiment());
    let _ = writeln!(out, "\n[run]\nseed = {}\nseeds = {}", cfg.seed, cfg.seeds);
    let _ = writeln!(out, "\n[params]");
    for (k, v) in cfg.params.entries() {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
