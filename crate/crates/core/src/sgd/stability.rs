use rand::Rng;
use rayon::prelude::*;

use super::optimizer::{sgd_train, Loss, SgdLearner};
use crate::error::Result;
use crate::stats;
use crate::stl::{derive_seed, stream, Dataset, Point, Purpose, StlRng};

/// Summary of per-trial stability measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Maximum over trials.
    pub estimate: f64,
    pub p95: f64,
    pub median: f64,
    pub mean: f64,
    pub trials: usize,
    pub n: usize,
    pub probe_size: usize,
    /// Reference rate to compare against (`16 rho^2 log n / n` for SGD).
    pub rate: Option<f64>,
    pub samples: Vec<f64>,
}

impl StabilityReport {
    fn from_samples(samples: Vec<f64>, n: usize, probe_size: usize, rate: Option<f64>) -> Self {
        StabilityReport {
            estimate: samples.iter().copied().fold(0.0, f64::max),
            p95: stats::quantile(&samples, 0.95),
            median: stats::median(&samples),
            mean: stats::mean(&samples),
            trials: samples.len(),
            n,
            probe_size,
            rate,
            samples,
        }
    }
}

/// `16 rho^2 log(n) / n`.
pub fn sgd_stability_rate(rho: f64, n: usize) -> f64 {
    16.0 * rho * rho * (n as f64).ln() / n as f64
}

/// Randomness sharing between the two runs being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Both runs consume the same streams.
    #[default]
    Shared,
    /// The neighbouring run gets its own streams.
    IndependentNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityOptions {
    pub coupling: Coupling,
    /// When false the neighbouring dataset equals the original one.
    pub replace: bool,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            coupling: Coupling::Shared,
            replace: true,
        }
    }
}

/// A learning algorithm whose output is a weight vector scored by a loss.
pub trait StabilityLearner: Sync {
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<f64>>;
    fn loss(&self, w: &[f64], z: &Point) -> f64;
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

impl<L: Loss + Sync> StabilityLearner for SgdLearner<L> {
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<f64>> {
        sgd_train(data, &self.loss, &self.config, seed)
    }

    fn loss(&self, w: &[f64], z: &Point) -> f64 {
        self.loss.value(w, z)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

fn draw_dataset<F>(sampler: &F, dim: usize, n: usize, rng: &mut StlRng) -> Result<Dataset>
where
    F: Fn(&mut StlRng) -> Point,
{
    let mut ds = Dataset::with_capacity(dim, n);
    for _ in 0..n {
        ds.push(sampler(rng))?;
    }
    Ok(ds)
}

fn neighbour(s: &Dataset, replace: bool, fresh: Point, index: usize) -> Result<(Dataset, Point)> {
    let mut other = s.clone();
    if replace {
        let old = other.replace(index, fresh)?;
        Ok((other, old))
    } else {
        Ok((other, s.points()[index].clone()))
    }
}

/// Estimates `sup_z |l(A(S), z) - l(A(S'), z)|` over neighbouring datasets.
///
/// Each trial draws `S` of size `n`, replaces one uniformly chosen point with a
/// fresh draw, trains on both (sharing the seed unless the coupling says
/// otherwise), and takes the maximum loss gap over `probe` fresh points plus
/// the two swapped points.
pub fn estimate_uniform_stability<A, F>(
    learner: &A,
    sampler: F,
    n: usize,
    trials: usize,
    probe: usize,
    seed: u64,
    options: StabilityOptions,
) -> Result<StabilityReport>
where
    A: StabilityLearner,
    F: Fn(&mut StlRng) -> Point + Sync,
{
    let dim = sampler(&mut stream(seed, 0, Purpose::Probe)).x.len();
    let samples: Vec<f64> = (0..trials.max(1))
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let trial = derive_seed(seed, t as u64, Purpose::Trial);
            let s = draw_dataset(&sampler, dim, n, &mut stream(trial, 0, Purpose::Real))?;
            let mut rep = stream(trial, 0, Purpose::Replace);
            let index = rep.random_range(0..n);
            let fresh = sampler(&mut rep);
            let (s_prime, old) = neighbour(&s, options.replace, fresh.clone(), index)?;
            let train_seed = derive_seed(trial, 0, Purpose::Sgd);
            let other_seed = match options.coupling {
                Coupling::Shared => train_seed,
                Coupling::IndependentNoise => derive_seed(trial, 1, Purpose::Sgd),
            };
            let w = learner.train(&s, train_seed)?;
            let w_prime = learner.train(&s_prime, other_seed)?;
            let mut probe_rng = stream(trial, 0, Purpose::Probe);
            let mut gap = (learner.loss(&w, &old) - learner.loss(&w_prime, &old))
                .abs()
                .max((learner.loss(&w, &fresh) - learner.loss(&w_prime, &fresh)).abs());
            for _ in 0..probe {
                let z = sampler(&mut probe_rng);
                gap = gap.max((learner.loss(&w, &z) - learner.loss(&w_prime, &z)).abs());
            }
            Ok(gap)
        })
        .collect::<Result<_>>()?;
    let rate = learner.lipschitz().map(|rho| sgd_stability_rate(rho, n));
    Ok(StabilityReport::from_samples(samples, n, probe, rate))
}

/// A loop whose outputs can be compared across neighbouring initial datasets.
pub trait RecursiveChain: Sync {
    /// Per-generation quantity the distance is evaluated on.
    type State: Send;

    fn dim(&self) -> usize;

    fn draw_point(&self, rng: &mut StlRng) -> Point;

    /// Runs generations `0..=generations` from `real` and returns one state each.
    fn run(&self, real: &Dataset, generations: usize, seed: u64) -> Result<Vec<Self::State>>;

    fn distance(&self, a: &Self::State, b: &Self::State) -> Result<f64>;

    /// Positions of `S_0` the replaced point is drawn from; all when `None`.
    fn replaceable(&self, _n: usize, _generations: usize, _seed: u64) -> Result<Option<Vec<usize>>> {
        Ok(None)
    }
}

/// Recursive stability at every generation `0..=generations`.
///
/// Each trial draws `S_0`, builds `S_0'` by replacing one point (uniformly
/// among [`RecursiveChain::replaceable`] positions) and runs both
/// chains with the same derived seed, so every query, noise and mixing draw is
/// shared and only the replaced point differs.
pub fn recursive_stability_profile<C: RecursiveChain>(
    chain: &C,
    n: usize,
    generations: usize,
    trials: usize,
    seed: u64,
    options: StabilityOptions,
) -> Result<Vec<StabilityReport>> {
    let per_trial: Vec<Vec<f64>> = (0..trials.max(1))
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let trial = derive_seed(seed, t as u64, Purpose::Trial);
            let mut real_rng = stream(trial, 0, Purpose::Real);
            let mut s = Dataset::with_capacity(chain.dim(), n);
            for _ in 0..n {
                s.push(chain.draw_point(&mut real_rng))?;
            }
            let chain_seed = derive_seed(trial, 0, Purpose::Sample);
            let mut rep = stream(trial, 0, Purpose::Replace);
            let index = match chain.replaceable(n, generations, chain_seed)? {
                Some(c) if !c.is_empty() => c[rep.random_range(0..c.len())],
                _ => rep.random_range(0..n),
            };
            let fresh = chain.draw_point(&mut rep);
            let (s_prime, _) = neighbour(&s, options.replace, fresh, index)?;
            let other_seed = match options.coupling {
                Coupling::Shared => chain_seed,
                Coupling::IndependentNoise => derive_seed(trial, 1, Purpose::Sample),
            };
            let a = chain.run(&s, generations, chain_seed)?;
            let b = chain.run(&s_prime, generations, other_seed)?;
            a.iter().zip(&b).map(|(x, y)| chain.distance(x, y)).collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..=generations)
        .map(|g| {
            let samples = per_trial.iter().map(|row| row[g]).collect();
            StabilityReport::from_samples(samples, n, 0, None)
        })
        .collect())
}

/// Recursive stability at generation `generations`.
pub fn estimate_recursive_stability<C: RecursiveChain>(
    chain: &C,
    n: usize,
    generations: usize,
    trials: usize,
    seed: u64,
    options: StabilityOptions,
) -> Result<StabilityReport> {
    let mut profile = recursive_stability_profile(chain, n, generations, trials, seed, options)?;
    Ok(profile.pop().expect("profile has generations + 1 entries"))
}
