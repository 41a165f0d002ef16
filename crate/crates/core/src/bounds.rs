//! Right-hand sides of the generalization and stability bounds, evaluated
//! with every hidden constant set to 1, and the `lambda*` solver.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Label recorded on every report.
pub const CONSTANT_CONVENTION: &str = "all hidden constants = 1";

/// `(1 + 2 B_W) e^{2 B_W}`.
pub fn b_tilde(b_w: f64) -> f64 {
    (1.0 + 2.0 * b_w) * (2.0 * b_w).exp()
}

/// `(1 - (1 - alpha)^i) / alpha`, equal to `i` at `alpha = 0`.
pub fn drift_factor(alpha: f64, i: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(i as f64);
    }
    if alpha == 1.0 {
        return Ok(if i == 0 { 0.0 } else { 1.0 });
    }
    Ok(-(i as f64 * (-alpha).ln_1p()).exp_m1() / alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", "out of [0,1]"));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", "out of (0,1)"));
    }
    Ok(())
}

/// Generation horizon for [`alpha_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// `1 - B~^{-((i+1)L)/i}`, or `1 - B~^{-L}` as `i -> infinity`.
pub fn alpha_threshold(b_w: f64, l: usize, horizon: Horizon) -> Result<f64> {
    if l == 0 {
        return Err(Error::invalid("L", "must be at least 1"));
    }
    let log_b = b_tilde(b_w).ln();
    let exponent = match horizon {
        Horizon::Finite(0) => return Err(Error::invalid("i", "must be at least 1")),
        Horizon::Finite(i) => (i + 1) as f64 * l as f64 / i as f64,
        Horizon::Infinite => l as f64,
    };
    Ok(-(-exponent * log_b).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfBoundForm {
    /// The displayed theorem statement.
    Theorem,
    /// The last display of the proof, including the accumulated real-data sum.
    Full,
}

/// Stability bound for the transformer loop after `i` generations.
pub fn transformer_stability_bound(
    n: usize,
    l: usize,
    b_w: f64,
    alpha: f64,
    i: usize,
    form: TfBoundForm,
) -> Result<f64> {
    Ok(transformer_stability_report(n, l, b_w, alpha, i, form)?.total)
}

/// [`transformer_stability_bound`] split into its terms.
pub fn transformer_stability_report(
    n: usize,
    l: usize,
    b_w: f64,
    alpha: f64,
    i: usize,
    form: TfBoundForm,
) -> Result<BoundReport> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(b_w >= 0.0) {
        return Err(Error::invalid("B_W", "must be nonnegative"));
    }
    let rows = 2.0 * n as f64 + 1.0;
    let log_b = b_tilde(b_w).ln();
    let keep = 1.0 - alpha;
    let shrink = n as f64 / rows;
    let amplify = |k: usize| ((k + 1) as f64 * l as f64 * log_b).exp();
    let mut report = BoundReport::new();
    match form {
        TfBoundForm::Theorem => {
            report.push("replaced-example", keep.powi(i as i32) * amplify(i) / rows);
            if alpha == 1.0 && i >= 1 {
                report
                    .notes
                    .push("theorem form vanishes at alpha=1; the full form does not".into());
            }
        }
        TfBoundForm::Full => {
            report.push(
                "replaced-example",
                2.0 * keep.powi(i as i32) * shrink.powi(i as i32) * amplify(i) / rows,
            );
            let sum: f64 = (0..i)
                .map(|k| keep.powi(k as i32) * shrink.powi(k as i32) * amplify(k))
                .sum();
            report.push("real-data-sum", 2.0 * alpha / rows * sum);
        }
    }
    Ok(report)
}

/// Named nonnegative terms and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub terms: Vec<(String, f64)>,
    pub total: f64,
    pub convention: &'static str,
    /// Some logarithm had an argument below 1 and was floored at 0.
    pub floored: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new() -> Self {
        BoundReport {
            terms: Vec::new(),
            total: 0.0,
            convention: CONSTANT_CONVENTION,
            floored: false,
            notes: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, value: f64) {
        self.terms.push((name.to_string(), value));
        self.total = self.terms.iter().map(|(_, v)| v).sum();
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    fn log_floor(&mut self, x: f64) -> f64 {
        if x < 1.0 {
            self.floored = true;
            0.0
        } else {
            x.ln()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub alpha: f64,
    pub i: usize,
    pub lambda: f64,
    pub delta: f64,
    /// Loss bound `M`.
    pub m: f64,
    /// Lipschitz constant.
    pub rho: f64,
    /// Smoothness constant.
    pub kappa: f64,
    pub b_w: f64,
    pub l: usize,
    pub d_tv: f64,
    pub beta_n: f64,
    pub gamma_n_i: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            n: 1,
            alpha: 0.0,
            i: 0,
            lambda: 1.0,
            delta: 0.1,
            m: 0.0,
            rho: 0.0,
            kappa: 0.0,
            b_w: 0.0,
            l: 1,
            d_tv: 0.0,
            beta_n: 0.0,
            gamma_n_i: 0.0,
        }
    }
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        check_alpha(self.alpha)?;
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        for (name, v) in [
            ("M", self.m),
            ("rho", self.rho),
            ("kappa", self.kappa),
            ("B_W", self.b_w),
            ("d_TV", self.d_tv),
            ("beta_n", self.beta_n),
            ("gamma_n_i", self.gamma_n_i),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// The four-term bound for a general generator with a stable learner.
///
/// With `proof_form`, the `beta_n log n` factor becomes
/// `(1 - alpha) log(n (1 - alpha)) + alpha log(n alpha)`.
pub fn thm1_rhs(inp: &BoundInputs, proof_form: bool) -> Result<BoundReport> {
    inp.validate()?;
    let mut r = BoundReport::new();
    let n = inp.n as f64;
    let a = inp.alpha;
    let log_d = (1.0 / inp.delta).ln();
    let log_na = r.log_floor(n * a);
    r.push("recursive-stability", inp.gamma_n_i * a * inp.m * log_na * log_d);
    r.push("concentration", inp.m * log_d.sqrt() / n.sqrt());
    let log_part = if proof_form {
        let log_nr = r.log_floor(n * (1.0 - a));
        (1.0 - a) * log_nr + a * log_na
    } else {
        n.ln()
    };
    r.push(
        "stability-log",
        inp.beta_n * (log_part * log_d + a * ((1.0 - a) * n * log_d).sqrt()),
    );
    r.push("cumulative-shift", inp.d_tv * inp.m * drift_factor(a, inp.i)?);
    Ok(r)
}

/// The three-term bound for SGD on a smooth Lipschitz loss with transformer data.
pub fn thm3_rhs(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let mut r = BoundReport::new();
    let n = inp.n as f64;
    let a = inp.alpha;
    let log_d = (1.0 / inp.delta).ln();
    let rho2 = inp.rho * inp.rho;
    r.push(
        "stability-sqrt",
        n.ln() * inp.m * rho2 * a * (1.0 - a).sqrt() * log_d / n.sqrt(),
    );
    let growth = ((1.0 - a) * b_tilde(inp.b_w).powi(inp.l as i32)).powi(inp.i as i32);
    r.push("recursive-stability", n.ln().powi(2) * rho2 * growth * a * log_d / n);
    r.push(
        "cumulative-shift",
        drift_factor(a, inp.i)? * inp.m * log_d / n.powf(0.25),
    );
    Ok(r)
}

/// The three-term bound for the accumulation regime with coefficient `lambda`.
pub fn thm4_rhs(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    if !(inp.lambda > 0.0 && inp.lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    let mut r = BoundReport::new();
    let n = inp.n as f64;
    let i = inp.i as f64;
    let log_d = (1.0 / inp.delta).ln();
    let grow = 1.0 + i * inp.lambda;
    let log_size = (grow * n).ln();
    r.push("cumulative-shift", log_size * inp.m * log_d / n.powf(0.25));
    let fast = if inp.rho == 0.0 {
        0.0
    } else {
        let log_amp = ln_gamma(i + 1.0) + (i + 1.0) * inp.l as f64 * b_tilde(inp.b_w).ln();
        (2.0 * inp.rho.ln() - 2.0 * grow.ln() + log_size.ln() + log_amp + log_d.ln() - n.ln()).exp()
    };
    r.push("mixed-generalization-fast", fast);
    r.push(
        "mixed-generalization-slow",
        inp.m * i / grow * log_d.sqrt() / n.sqrt(),
    );
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmBoundForm {
    Stability,
    Generalization,
}

/// Bounds for the Gaussian-mixture loop in dimension `d`.
pub fn gmm_bound_rhs(
    n: usize,
    d: usize,
    alpha: f64,
    i: usize,
    delta: f64,
    form: GmmBoundForm,
) -> Result<BoundReport> {
    check_delta(delta)?;
    if n == 0 || d == 0 {
        return Err(Error::invalid("n, d", "must be at least 1"));
    }
    let drift = drift_factor(alpha, i)?;
    let n_f = n as f64;
    let d_f = d as f64;
    let log_nd = (n_f * d_f / delta).ln();
    let mut r = BoundReport::new();
    match form {
        GmmBoundForm::Stability => r.push("stability", drift * log_nd / n_f.sqrt()),
        GmmBoundForm::Generalization => {
            let size = d_f + (n_f / delta).ln();
            r.push(
                "generalization",
                size * n_f.ln() * (1.0 / delta).ln() / n_f.sqrt(),
            );
            r.push(
                "cumulative-shift",
                drift * size * (d_f * log_nd).sqrt() / n_f.powf(0.25),
            );
        }
    }
    Ok(r)
}

/// Inputs of the `lambda*` problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaStarInputs {
    pub n: usize,
    pub i: usize,
    pub rho: f64,
    pub m: f64,
    pub b_w: f64,
    pub l: usize,
    pub delta: f64,
    /// Slack on the comparison: the condition is `shift <= c * generalization`.
    pub c: f64,
}

impl Default for LambdaStarInputs {
    fn default() -> Self {
        LambdaStarInputs {
            n: 100,
            i: 5,
            rho: 1.0,
            m: 1.0,
            b_w: 0.5,
            l: 2,
            delta: 0.1,
            c: 1.0,
        }
    }
}

pub const LAMBDA_MIN: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 1e6;
const LAMBDA_SCAN: usize = 1024;
const LAMBDA_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaStar {
    /// Boundary between the satisfied and violated ranges. `multi_root` is set
    /// when the scan saw more than one sign change; the smallest is returned.
    Crossing { lambda: f64, multi_root: bool },
    /// The condition holds on the whole bracket.
    AlwaysSatisfied { lambda: f64 },
    /// The condition fails on the whole bracket.
    NeverSatisfied,
}

impl LambdaStar {
    pub fn value(&self) -> Option<f64> {
        match *self {
            LambdaStar::Crossing { lambda, .. } | LambdaStar::AlwaysSatisfied { lambda } => {
                Some(lambda)
            }
            LambdaStar::NeverSatisfied => None,
        }
    }
}

/// `f(lambda) = shift - c * (fast + slow)` from [`thm4_rhs`].
pub fn lambda_gap(inp: &LambdaStarInputs, lambda: f64) -> Result<f64> {
    let r = thm4_rhs(&BoundInputs {
        n: inp.n,
        i: inp.i,
        lambda,
        delta: inp.delta,
        m: inp.m,
        rho: inp.rho,
        b_w: inp.b_w,
        l: inp.l,
        ..Default::default()
    })?;
    let shift = r.terms[0].1;
    let generalization = r.terms[1].1 + r.terms[2].1;
    Ok(shift - inp.c * generalization)
}

/// Locates where `shift <= c * generalization` switches on `[1e-6, 1e6]`.
///
/// A 1024-point log-spaced scan finds sign changes of [`lambda_gap`]; the first
/// is refined by bisection in log space to relative width `1e-9`, and the
/// endpoint on the satisfied side is returned.
pub fn solve_lambda_star(inp: &LambdaStarInputs) -> Result<LambdaStar> {
    if !(inp.c > 0.0) {
        return Err(Error::invalid("c", "must be positive"));
    }
    let (lo_log, hi_log) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let grid: Vec<f64> = (0..LAMBDA_SCAN)
        .map(|k| (lo_log + (hi_log - lo_log) * k as f64 / (LAMBDA_SCAN - 1) as f64).exp())
        .collect();
    let values = grid
        .iter()
        .map(|&l| lambda_gap(inp, l))
        .collect::<Result<Vec<f64>>>()?;
    let ok: Vec<bool> = values.iter().map(|v| *v <= 0.0).collect();
    let changes: Vec<usize> = (1..LAMBDA_SCAN).filter(|&k| ok[k] != ok[k - 1]).collect();
    let Some(&first) = changes.first() else {
        return Ok(if ok[0] {
            LambdaStar::AlwaysSatisfied { lambda: LAMBDA_MIN }
        } else {
            LambdaStar::NeverSatisfied
        });
    };
    let sat_left = ok[first - 1];
    let (mut a, mut b) = (grid[first - 1], grid[first]);
    while b / a - 1.0 > LAMBDA_REL_TOL {
        let mid = (a * b).sqrt();
        if (lambda_gap(inp, mid)? <= 0.0) == sat_left {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(LambdaStar::Crossing {
        lambda: if sat_left { a } else { b },
        multi_root: changes.len() > 1,
    })
}
