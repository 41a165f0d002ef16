//! Label-conditional Gaussian mixture: closed-form fit and sampler, the mean
//! classifier learner, its quadratic loss, and exact risks.
//!
//! The true law is `y ~ uniform{-1, +1}`, `x | y ~ N(y mu, sigma^2 I)` with
//! `||mu|| = 1`. The fitted generator keeps one mean per class and a pooled
//! diagonal variance.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::divergence::{kl_diag_gauss, DiagGaussian};
use crate::error::{Error, Result};
use crate::sgd::RecursiveChain;
use crate::stl::{
    run_stl, Dataset, Generator, Learner, MixPolicy, NoLearner, Point, Provenance, StlConfig,
    StlRng,
};

/// Variances below this are raised to it before sampling.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrueGmm {
    pub mu: Vec<f64>,
    pub sigma2: f64,
}

impl TrueGmm {
    pub fn new(mu: Vec<f64>, sigma2: f64) -> Result<Self> {
        let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mu", format!("must have unit norm, got {norm}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid("sigma2", "must be positive"));
        }
        Ok(TrueGmm { mu, sigma2 })
    }

    /// `mu = e_1` in `d` dimensions.
    pub fn axis(d: usize, sigma2: f64) -> Result<Self> {
        let mut mu = vec![0.0; d];
        mu[0] = 1.0;
        Self::new(mu, sigma2)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// The true model written as fitted-model parameters.
    pub fn as_params(&self) -> GmmParams {
        GmmParams {
            mu_plus: self.mu.clone(),
            mu_minus: self.mu.iter().map(|v| -v).collect(),
            var: vec![self.sigma2; self.dim()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    /// Pooled per-coordinate variance shared by both classes.
    pub var: Vec<f64>,
}

impl GmmParams {
    pub fn dim(&self) -> usize {
        self.var.len()
    }

    pub fn mean(&self, label: f64) -> &[f64] {
        if label > 0.0 {
            &self.mu_plus
        } else {
            &self.mu_minus
        }
    }

    /// Coordinates whose variance sits below [`VARIANCE_FLOOR`].
    pub fn floored_count(&self) -> usize {
        self.var.iter().filter(|v| **v < VARIANCE_FLOOR).count()
    }

    /// Flattened `(mu_plus, mu_minus, var)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.mu_plus.clone();
        v.extend(&self.mu_minus);
        v.extend(&self.var);
        v
    }
}

fn draw_label<R: Rng + ?Sized>(rng: &mut R, index: usize, m: usize, stratified: bool) -> f64 {
    if stratified {
        if index < m.div_ceil(2) {
            1.0
        } else {
            -1.0
        }
    } else if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// `m` i.i.d. draws from the true mixture, tagged real.
pub fn sample_true<R: Rng + ?Sized>(params: &TrueGmm, m: usize, rng: &mut R) -> Dataset {
    let sd = params.sigma2.sqrt();
    let mut out = Dataset::with_capacity(params.dim(), m);
    for _ in 0..m {
        let y = draw_label(rng, 0, m, false);
        let x = params
            .mu
            .iter()
            .map(|mu| {
                let g: f64 = rng.sample(StandardNormal);
                y * mu + sd * g
            })
            .collect();
        out.push(Point::scalar(x, y, Provenance::Real))
            .expect("finite draw");
    }
    out
}

/// Closed-form fit: per-class means and the pooled unbiased diagonal variance
/// `sum_y (n_y/n) * sum_{y_i=y} (x_ik - mu_yk)^2 / (n_y - 1)`.
pub fn fit_gmm(data: &Dataset) -> Result<GmmParams> {
    let d = data.dim();
    let n = data.len();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for p in data {
        let c = usize::from(p.label() <= 0.0);
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(&p.x) {
            *s += x;
        }
    }
    for (c, label) in [(0usize, 1i8), (1, -1)] {
        if counts[c] < 2 {
            return Err(Error::DegenerateClass {
                label,
                count: counts[c],
            });
        }
    }
    let means: Vec<Vec<f64>> = (0..2)
        .map(|c| sums[c].iter().map(|s| s / counts[c] as f64).collect())
        .collect();
    let mut sq = [vec![0.0; d], vec![0.0; d]];
    for p in data {
        let c = usize::from(p.label() <= 0.0);
        for k in 0..d {
            let r = p.x[k] - means[c][k];
            sq[c][k] += r * r;
        }
    }
    let var = (0..d)
        .map(|k| {
            (0..2)
                .map(|c| counts[c] as f64 / n as f64 * sq[c][k] / (counts[c] - 1) as f64)
                .sum()
        })
        .collect();
    let mut means = means.into_iter();
    Ok(GmmParams {
        mu_plus: means.next().unwrap(),
        mu_minus: means.next().unwrap(),
        var,
    })
}

/// Draws `m` points from the fitted mixture (variances floored).
pub fn sample_gmm<R: Rng + ?Sized>(
    params: &GmmParams,
    m: usize,
    provenance: Provenance,
    stratified: bool,
    rng: &mut R,
) -> Dataset {
    let sd: Vec<f64> = params
        .var
        .iter()
        .map(|v| v.max(VARIANCE_FLOOR).sqrt())
        .collect();
    let mut out = Dataset::with_capacity(params.dim(), m);
    for i in 0..m {
        let y = draw_label(rng, i, m, stratified);
        let x = params
            .mean(y)
            .iter()
            .zip(&sd)
            .map(|(mu, s)| {
                let g: f64 = rng.sample(StandardNormal);
                mu + s * g
            })
            .collect();
        out.push(Point::scalar(x, y, provenance))
            .expect("finite draw");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub theta: Vec<f64>,
}

impl LinearClassifier {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.theta.iter().zip(x).map(|(t, v)| t * v).sum();
        if s >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `theta = (1/m) sum y_i x_i`.
pub fn fit_linear_classifier(data: &Dataset) -> Result<LinearClassifier> {
    if data.is_empty() {
        return Err(Error::invalid("data", "must be nonempty"));
    }
    let mut theta = vec![0.0; data.dim()];
    for p in data {
        for (t, x) in theta.iter_mut().zip(&p.x) {
            *t += p.label() * x;
        }
    }
    let m = data.len() as f64;
    theta.iter_mut().for_each(|t| *t /= m);
    Ok(LinearClassifier { theta })
}

/// `(x - y theta)^T (x - y theta) / (2 sigma^2)`.
pub fn gmm_loss(theta: &[f64], x: &[f64], y: f64, sigma2: f64) -> f64 {
    let sq: f64 = x
        .iter()
        .zip(theta)
        .map(|(xi, t)| {
            let r = xi - y * t;
            r * r
        })
        .sum();
    sq / (2.0 * sigma2)
}

/// Exact risk under the true law: `(||mu - theta||^2 + d sigma^2) / (2 sigma^2)`.
pub fn population_risk_gmm(theta: &[f64], truth: &TrueGmm) -> f64 {
    let dist: f64 = truth
        .mu
        .iter()
        .zip(theta)
        .map(|(m, t)| (m - t) * (m - t))
        .sum();
    (dist + truth.dim() as f64 * truth.sigma2) / (2.0 * truth.sigma2)
}

/// Exact risk when data come from a fitted mixture; `sigma2` is the loss scale.
pub fn fitted_risk(theta: &[f64], params: &GmmParams, sigma2: f64) -> f64 {
    let total_var: f64 = params.var.iter().sum();
    let class = |mean: &[f64], y: f64| -> f64 {
        mean.iter()
            .zip(theta)
            .map(|(m, t)| {
                let r = m - y * t;
                r * r
            })
            .sum::<f64>()
    };
    let spread = 0.5 * (class(&params.mu_plus, 1.0) + class(&params.mu_minus, -1.0));
    (spread + total_var) / (2.0 * sigma2)
}

pub fn empirical_risk(theta: &[f64], data: &Dataset, sigma2: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("data", "must be nonempty"));
    }
    Ok(data
        .iter()
        .map(|p| gmm_loss(theta, &p.x, p.label(), sigma2))
        .sum::<f64>()
        / data.len() as f64)
}

/// KL between the joint laws of `(x, y)`; exact because both share the uniform
/// label marginal.
pub fn joint_kl_gmm(p: &GmmParams, q: &GmmParams) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    if let Some(index) = q.var.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::SingularReference { index });
    }
    if p.var.iter().any(|v| !(*v > 0.0)) {
        return Ok(f64::INFINITY);
    }
    let half = |mp: &[f64], mq: &[f64]| -> Result<f64> {
        kl_diag_gauss(
            &DiagGaussian::new(mp.to_vec(), p.var.clone())?,
            &DiagGaussian::new(mq.to_vec(), q.var.clone())?,
        )
    };
    Ok(0.5 * half(&p.mu_plus, &q.mu_plus)? + 0.5 * half(&p.mu_minus, &q.mu_minus)?)
}

/// The fitted mixture as a loop generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct GmmGenerator {
    pub stratified: bool,
}

impl Generator for GmmGenerator {
    type Model = GmmParams;

    fn fit(&self, data: &Dataset) -> Result<GmmParams> {
        fit_gmm(data)
    }

    fn sample(
        &self,
        model: &GmmParams,
        count: usize,
        generation: usize,
        rng: &mut StlRng,
    ) -> Result<Dataset> {
        Ok(sample_gmm(
            model,
            count,
            Provenance::Synthetic(generation),
            self.stratified,
            rng,
        ))
    }
}

/// Mean classifier trained on a subsample of `m` points (all points when `None`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassifierLearner {
    pub m: Option<usize>,
}

impl ClassifierLearner {
    /// `m = ceil(sqrt(n))`.
    pub fn sqrt_rule(n: usize) -> Self {
        ClassifierLearner {
            m: Some((n as f64).sqrt().ceil() as usize),
        }
    }
}

impl Learner for ClassifierLearner {
    type Output = LinearClassifier;

    fn learn(&self, data: &Dataset, rng: &mut StlRng) -> Result<LinearClassifier> {
        match self.m {
            Some(m) if m < data.len() => {
                let mut picked = index::sample(rng, data.len(), m.max(1)).into_vec();
                picked.sort_unstable();
                fit_linear_classifier(&data.select(&picked))
            }
            _ => fit_linear_classifier(data),
        }
    }
}

/// One-dimensional Gaussian `N(mean, var)` refitted on its own samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Gauss1dParams {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gauss1dGenerator;

impl Generator for Gauss1dGenerator {
    type Model = Gauss1dParams;

    fn fit(&self, data: &Dataset) -> Result<Gauss1dParams> {
        if data.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: data.dim(),
            });
        }
        if data.len() < 2 {
            return Err(Error::invalid("data", "needs at least 2 points"));
        }
        let n = data.len() as f64;
        let mean = data.iter().map(|p| p.x[0]).sum::<f64>() / n;
        let ss: f64 = data.iter().map(|p| (p.x[0] - mean).powi(2)).sum();
        Ok(Gauss1dParams {
            mean,
            var: ss / (n - 1.0),
        })
    }

    fn sample(
        &self,
        model: &Gauss1dParams,
        count: usize,
        generation: usize,
        rng: &mut StlRng,
    ) -> Result<Dataset> {
        let sd = model.var.max(VARIANCE_FLOOR).sqrt();
        let mut out = Dataset::with_capacity(1, count);
        for _ in 0..count {
            let g: f64 = rng.sample(StandardNormal);
            out.push(Point::scalar(
                vec![model.mean + sd * g],
                1.0,
                Provenance::Synthetic(generation),
            ))?;
        }
        Ok(out)
    }
}

/// Distance between the fitted mixtures of two coupled chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmDistance {
    JointKl,
    ParamL2,
}

/// The mixture loop under a fixed-ratio policy, for recursive stability.
#[derive(Debug, Clone)]
pub struct GmmChain {
    pub truth: TrueGmm,
    pub alpha: f64,
    pub stratified: bool,
    pub distance: GmmDistance,
}

impl RecursiveChain for GmmChain {
    type State = GmmParams;

    fn dim(&self) -> usize {
        self.truth.dim()
    }

    fn draw_point(&self, rng: &mut StlRng) -> Point {
        sample_true(&self.truth, 1, rng).points()[0].clone()
    }

    fn run(&self, real: &Dataset, generations: usize, seed: u64) -> Result<Vec<GmmParams>> {
        let cfg = StlConfig::new(
            MixPolicy::FixedRatio {
                alpha: self.alpha,
                n: real.len(),
            },
            generations,
            seed,
        );
        let generator = GmmGenerator {
            stratified: self.stratified,
        };
        let trace = run_stl::<_, NoLearner>(&generator, None, real, &cfg)?;
        Ok(trace.records.into_iter().map(|r| r.model).collect())
    }

    fn distance(&self, a: &GmmParams, b: &GmmParams) -> Result<f64> {
        match self.distance {
            GmmDistance::JointKl => joint_kl_gmm(a, b),
            GmmDistance::ParamL2 => Ok(a
                .to_vec()
                .iter()
                .zip(b.to_vec())
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                .sqrt()),
        }
    }
}
