use rand::seq::index;
use rand::Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// How real and synthetic data are combined at each generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixPolicy {
    /// `alpha * n` real points plus `(1 - alpha) * n` synthetic points.
    FixedRatio { alpha: f64, n: usize },
    /// `S_0` plus every synthetic generation so far, each of size `lambda * n`.
    Accumulate { lambda: f64, n: usize },
}

impl MixPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MixPolicy::FixedRatio { alpha, n } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::invalid("alpha", "out of [0,1]"));
                }
                if n == 0 {
                    return Err(Error::invalid("n", "must be at least 1"));
                }
            }
            MixPolicy::Accumulate { lambda, n } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid("lambda", "must be positive"));
                }
                if n == 0 {
                    return Err(Error::invalid("n", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// `round(x)` with ties going up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Number of real points under a fixed ratio; the synthetic share is `n` minus this.
pub fn real_share(alpha: f64, n: usize) -> usize {
    round_half_up(alpha * n as f64).min(n)
}

/// Sorted indices of `k` out of `available`, drawn without replacement.
pub fn subset_indices<R: Rng + ?Sized>(available: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > available {
        return Err(Error::InsufficientPoints {
            requested: k,
            available,
        });
    }
    let mut picked = index::sample(rng, available, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Draws `k` of `source` without replacement, keeping the source order.
fn draw_subset<R: Rng + ?Sized>(source: &Dataset, k: usize, rng: &mut R) -> Result<Dataset> {
    Ok(source.select(&subset_indices(source.len(), k, rng)?))
}

/// Builds `alpha * S_0 + (1 - alpha) * S_j`: `round(alpha * n)` real points and
/// the remainder synthetic, both drawn without replacement. The real subset is
/// drawn first so that it depends only on the stream, never on `synthetic`.
pub fn mix_fixed_ratio<R: Rng + ?Sized>(
    real: &Dataset,
    synthetic: &Dataset,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    MixPolicy::FixedRatio { alpha, n }.validate()?;
    let k_real = real_share(alpha, n);
    let k_syn = n - k_real;
    if k_real > 0 && k_syn > 0 && real.dim() != synthetic.dim() {
        return Err(Error::DimensionMismatch {
            expected: real.dim(),
            found: synthetic.dim(),
        });
    }
    let dim = if k_real > 0 { real.dim() } else { synthetic.dim() };
    let mut out = Dataset::with_capacity(dim, n);
    if k_real > 0 {
        out.extend_from(&draw_subset(real, k_real, rng)?)?;
    }
    if k_syn > 0 {
        out.extend_from(&draw_subset(synthetic, k_syn, rng)?)?;
    }
    Ok(out)
}

/// Concatenates `S_0, S_1, ..., S_i`.
pub fn mix_accumulate(
    real: &Dataset,
    synthetic_generations: &[Dataset],
    lambda: f64,
) -> Result<Dataset> {
    MixPolicy::Accumulate {
        lambda,
        n: real.len().max(1),
    }
    .validate()?;
    let expected = round_half_up(lambda * real.len() as f64);
    let mut out = real.clone();
    for generation in synthetic_generations {
        if generation.dim() != real.dim() {
            return Err(Error::DimensionMismatch {
                expected: real.dim(),
                found: generation.dim(),
            });
        }
        if generation.len() != expected {
            return Err(Error::invalid(
                "synthetic generation",
                format!("has {} points, expected {expected}", generation.len()),
            ));
        }
        out.extend_from(generation)?;
    }
    Ok(out)
}
