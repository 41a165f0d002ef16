//! Divergences between Gaussians and between samples: closed-form KL, total
//! variation by quadrature and by Monte Carlo, 1-D Wasserstein-2, histogram TV
//! and the Pinsker upper bound.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Axis-aligned Gaussian `N(mean, diag(var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: var.len(),
            });
        }
        if var.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variance", "must be positive and finite"));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        Self::new(vec![mean], vec![var])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A density that can be evaluated and sampled.
pub trait Density {
    fn log_pdf(&self, x: &[f64]) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl Density for DiagGaussian {
    fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * (LN_2PI + v.ln() + (xi - m) * (xi - m) / v))
            .sum()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| {
                let g: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * g
            })
            .collect()
    }
}

fn check_var(var: &[f64]) -> Result<()> {
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("variance", "must be positive"));
    }
    Ok(())
}

/// `KL(p || q)` for diagonal Gaussians.
pub fn kl_diag_gauss(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    check_var(&p.var)?;
    check_var(&q.var)?;
    let mut kl = 0.0;
    for k in 0..p.dim() {
        let ratio = p.var[k] / q.var[k];
        let diff = p.mean[k] - q.mean[k];
        kl += 0.5 * (-ratio.ln() + ratio + diff * diff / q.var[k] - 1.0);
    }
    Ok(kl.max(0.0))
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson over `[a, b]`, first split into `panels` equal pieces so
/// that narrow features are not skipped by the initial coarse estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == panels { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(fa, fm, fb, lo, hi);
            adaptive(&f, lo, hi, fa, fm, fb, whole, panel_tol, 40)
        })
        .sum()
}

fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-0.5 * (x - mean) * (x - mean) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `TV(p, q) = 1/2 ∫ |p - q|` for 1-D Gaussians, by adaptive quadrature over
/// the mean span widened by 12 of the larger standard deviation.
pub fn tv_gauss_1d(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::invalid("tv_gauss_1d", "needs 1-D distributions"));
    }
    let (mp, vp, mq, vq) = (p.mean[0], p.var[0], q.mean[0], q.var[0]);
    if mp == mq && vp == vq {
        return Ok(0.0);
    }
    let s_max = vp.max(vq).sqrt();
    let s_min = vp.min(vq).sqrt();
    let a = mp.min(mq) - 12.0 * s_max;
    let b = mp.max(mq) + 12.0 * s_max;
    let panels = (((b - a) / (0.5 * s_min)).ceil() as usize).clamp(16, 8192);
    let val = integrate(
        |x| 0.5 * (gauss_pdf(x, mp, vp) - gauss_pdf(x, mq, vq)).abs(),
        a,
        b,
        panels,
        1e-10,
    );
    Ok(val.clamp(0.0, 1.0))
}

/// Monte Carlo TV using `TV = E_{z ~ (p+q)/2} |p(z) - q(z)| / (p(z) + q(z))`.
/// Returns the estimate and its standard error.
pub fn tv_mc<P, Q, R>(p: &P, q: &Q, m: usize, rng: &mut R) -> Result<(f64, f64)>
where
    P: Density,
    Q: Density,
    R: Rng + ?Sized,
{
    if m < 1000 {
        return Err(Error::invalid("m", "must be at least 1000"));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..m {
        let z = if rng.random_bool(0.5) {
            p.sample(rng)
        } else {
            q.sample(rng)
        };
        let (lp, lq) = (p.log_pdf(&z), q.log_pdf(&z));
        // |p - q| / (p + q) = |tanh((log p - log q) / 2)|
        let term = if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
            0.0
        } else {
            (0.5 * (lp - lq)).tanh().abs()
        };
        sum += term;
        sum_sq += term * term;
    }
    let mf = m as f64;
    let mean = sum / mf;
    let var = ((sum_sq / mf - mean * mean) * mf / (mf - 1.0)).max(0.0);
    Ok((mean, (var / mf).sqrt()))
}

/// Wasserstein-2 distance between 1-D Gaussians.
pub fn w2_gauss_1d(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::invalid("w2_gauss_1d", "needs 1-D distributions"));
    }
    let dm = p.mean[0] - q.mean[0];
    let ds = p.var[0].sqrt() - q.var[0].sqrt();
    Ok((dm * dm + ds * ds).sqrt())
}

/// Pinsker's bound `TV <= sqrt(KL / 2)`, capped at 1.
pub fn pinsker_tv_upper(kl: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(Error::invalid("kl", "must be nonnegative"));
    }
    Ok((kl / 2.0).sqrt().min(1.0))
}

/// Histogram TV over a shared equal-width binning spanning both samples.
pub fn tv_hist(samples_p: &[f64], samples_q: &[f64], bins: usize) -> Result<f64> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::invalid("samples", "must be nonempty"));
    }
    if bins < 2 {
        return Err(Error::invalid("bins", "must be at least 2"));
    }
    let lo = samples_p
        .iter()
        .chain(samples_q)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = samples_p
        .iter()
        .chain(samples_q)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("tv_hist samples"));
    }
    if hi == lo {
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let histogram = |s: &[f64]| {
        let mut h = vec![0.0; bins];
        for v in s {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            h[b] += 1.0;
        }
        let n = s.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let (hp, hq) = (histogram(samples_p), histogram(samples_q));
    Ok(0.5 * hp.iter().zip(&hq).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::rng::rng_from_seed;

    fn g(m: f64, v: f64) -> DiagGaussian {
        DiagGaussian::univariate(m, v).unwrap()
    }

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_diag_gauss(&g(0.0, 1.0), &g(0.0, 1.0)).unwrap(), 0.0);
        assert!((kl_diag_gauss(&g(0.0, 1.0), &g(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let expected = 0.5 * (4.0f64.ln() + 0.25 - 1.0);
        assert!((kl_diag_gauss(&g(0.0, 1.0), &g(0.0, 4.0)).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.318147).abs() < 1e-6);
        assert!(DiagGaussian::univariate(0.0, 0.0).is_err());
    }

    #[test]
    fn tv_quadrature_values() {
        assert_eq!(tv_gauss_1d(&g(0.0, 1.0), &g(0.0, 1.0)).unwrap(), 0.0);
        let v = tv_gauss_1d(&g(0.0, 1.0), &g(1.0, 1.0)).unwrap();
        assert!((v - 0.382_924_922_548_026).abs() < 1e-8, "{v}");
        let far = tv_gauss_1d(&g(-100.0, 1.0), &g(100.0, 1.0)).unwrap();
        assert!((far - 1.0).abs() < 1e-8, "{far}");
        let ab = tv_gauss_1d(&g(0.3, 0.5), &g(-1.0, 2.0)).unwrap();
        let ba = tv_gauss_1d(&g(-1.0, 2.0), &g(0.3, 0.5)).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn w2_values() {
        assert_eq!(w2_gauss_1d(&g(0.0, 1.0), &g(0.0, 1.0)).unwrap(), 0.0);
        assert!((w2_gauss_1d(&g(0.0, 1.0), &g(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((w2_gauss_1d(&g(0.0, 1.0), &g(0.0, 9.0)).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn pinsker_values() {
        assert_eq!(pinsker_tv_upper(0.0).unwrap(), 0.0);
        assert!((pinsker_tv_upper(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(pinsker_tv_upper(0.5).unwrap() >= 0.3829);
        assert_eq!(pinsker_tv_upper(2.0).unwrap(), 1.0);
        assert!(pinsker_tv_upper(-0.1).is_err());
    }

    #[test]
    fn tv_mc_identical_is_zero() {
        let p = g(0.0, 1.0);
        let (est, se) = tv_mc(&p, &p, 1000, &mut rng_from_seed(3)).unwrap();
        assert_eq!((est, se), (0.0, 0.0));
        assert!(tv_mc(&p, &p, 10, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn tv_hist_edges() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(tv_hist(&a, &a, 10).unwrap(), 0.0);
        assert_eq!(tv_hist(&[0.0, 0.1], &[5.0, 5.1], 4).unwrap(), 1.0);
        assert!(tv_hist(&[], &a, 10).is_err());
        assert!(tv_hist(&a, &a, 1).is_err());
    }
}
