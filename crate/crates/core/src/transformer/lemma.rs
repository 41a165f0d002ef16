use rand::Rng;

use super::attention::softmax;
use crate::error::{Error, Result};
use crate::stl::{stream, Purpose};

/// Tally of the two softmax perturbation inequalities over random trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxLemmaStats {
    pub c: f64,
    pub n: usize,
    pub trials: usize,
    pub linf_violations: usize,
    pub l1_violations: usize,
    /// Largest `||softmax(z)||_inf / (e^{2c} / n)` seen.
    pub worst_linf_ratio: f64,
    /// Largest `||softmax(z) - softmax(z + eps)||_1 / (e^{2c} ||eps||_1 / n)` seen.
    pub worst_l1_ratio: f64,
}

impl SoftmaxLemmaStats {
    pub fn violations(&self) -> usize {
        self.linf_violations + self.l1_violations
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Both ratios for one pair `(z, z + eps)`.
pub fn softmax_lemma_ratios(z: &[f64], perturbed: &[f64], c: f64) -> (f64, f64) {
    let n = z.len() as f64;
    let cap = (2.0 * c).exp() / n;
    let p = softmax(z);
    let q = softmax(perturbed);
    let linf = p.iter().chain(&q).copied().fold(0.0, f64::max);
    let eps = l1(z, perturbed);
    let l1_ratio = if eps > 0.0 { l1(&p, &q) / (cap * eps) } else { 0.0 };
    (linf / cap, l1_ratio)
}

/// Draws `z` uniform in `[-c, c]^n` and `z + eps` on a random fraction of the
/// way to a second uniform point, so both stay in the box and perturbation
/// sizes span several scales.
pub fn softmax_lemma_suite(c: f64, n: usize, trials: usize, seed: u64) -> Result<SoftmaxLemmaStats> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", "must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let mut rng = stream(seed, n as u64, Purpose::Trial);
    let mut stats = SoftmaxLemmaStats {
        c,
        n,
        trials,
        linf_violations: 0,
        l1_violations: 0,
        worst_linf_ratio: 0.0,
        worst_l1_ratio: 0.0,
    };
    // Rounding slack only; the inequalities themselves are not relaxed.
    let slack = 1.0 + 1e-12;
    for _ in 0..trials {
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-c..=c)).collect();
        let scale = 10f64.powf(-4.0 * rng.random::<f64>());
        let perturbed: Vec<f64> = z
            .iter()
            .map(|&zi| zi + scale * (rng.random_range(-c..=c) - zi))
            .collect();
        let (linf, l1r) = softmax_lemma_ratios(&z, &perturbed, c);
        stats.worst_linf_ratio = stats.worst_linf_ratio.max(linf);
        stats.worst_l1_ratio = stats.worst_l1_ratio.max(l1r);
        stats.linf_violations += usize::from(linf > slack);
        stats.l1_violations += usize::from(l1r > slack);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_trials_hold() {
        for c in [0.5, 1.0, 2.0] {
            for n in [2, 8, 64] {
                let s = softmax_lemma_suite(c, n, 2000, 3).unwrap();
                assert_eq!(s.violations(), 0, "{s:?}");
                assert!(s.worst_linf_ratio > 0.0 && s.worst_l1_ratio > 0.0);
            }
        }
    }

    #[test]
    fn linf_extreme_point_is_below_cap() {
        // One coordinate at +c, the rest at -c: e^{2c} / (e^{2c} + n - 1).
        let (c, n) = (1.0, 8);
        let mut z = vec![-c; n];
        z[0] = c;
        let (linf, _) = softmax_lemma_ratios(&z, &z, c);
        let expected = n as f64 / ((2.0 * c).exp() + n as f64 - 1.0);
        assert!((linf - expected).abs() < 1e-12);
    }

    #[test]
    fn single_coordinate_push_can_exceed_l1_constant_by_at_most_two() {
        // Moving only the dominant coordinate gives derivative 2 p (1 - p),
        // which beats e^{2c} / n for long rows but never twice it.
        let (c, n) = (0.5, 64);
        let mut z = vec![-c; n];
        z[0] = c - 1e-7;
        let mut zp = z.clone();
        zp[0] = c;
        let (_, l1r) = softmax_lemma_ratios(&z, &zp, c);
        assert!(l1r > 1.0 && l1r <= 2.0, "{l1r}");
    }
}
