use std::collections::BTreeMap;
use std::fmt::Debug;

use super::dataset::Dataset;
use super::mix::{mix_accumulate, mix_fixed_ratio, real_share, round_half_up, subset_indices, MixPolicy};
use super::rng::{stream, Purpose, StlRng, RNG_ALGORITHM};
use crate::error::{Error, Result};

/// A generative model family: fit parameters to data, sample from them.
///
/// `sample` must consume its stream identically whatever the fitted parameters
/// are; coupled chains rely on it.
pub trait Generator {
    type Model: Clone + Debug + PartialEq;

    fn fit(&self, data: &Dataset) -> Result<Self::Model>;

    fn sample(
        &self,
        model: &Self::Model,
        count: usize,
        generation: usize,
        rng: &mut StlRng,
    ) -> Result<Dataset>;
}

/// A downstream learning algorithm run on each mixed dataset.
pub trait Learner {
    type Output: Clone + Debug + PartialEq;

    fn learn(&self, data: &Dataset, rng: &mut StlRng) -> Result<Self::Output>;
}

/// Placeholder learner for runs that only track the generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoLearner;

impl Learner for NoLearner {
    type Output = ();

    fn learn(&self, _data: &Dataset, _rng: &mut StlRng) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlConfig {
    pub policy: MixPolicy,
    pub generations: usize,
    pub seed: u64,
    /// Freeze one real subset for every generation instead of re-drawing it.
    pub fixed_real_subset: bool,
    /// Synthetic points sampled per needed point before sub-selection.
    pub oversample_factor: f64,
}

impl StlConfig {
    pub fn new(policy: MixPolicy, generations: usize, seed: u64) -> Self {
        StlConfig {
            policy,
            generations,
            seed,
            fixed_real_subset: false,
            oversample_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.oversample_factor >= 1.0 && self.oversample_factor.is_finite()) {
            return Err(Error::invalid("oversample_factor", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord<M, O> {
    pub generation: usize,
    pub model: M,
    /// The dataset `model` was fitted on (`S_0` at generation 0).
    pub mixed: Dataset,
    pub mixed_fingerprint: u64,
    pub learner_output: Option<O>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace<M, O> {
    pub seed: u64,
    pub rng_algorithm: &'static str,
    pub records: Vec<GenerationRecord<M, O>>,
}

impl<M, O> GenerationTrace<M, O> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &GenerationRecord<M, O> {
        self.records.last().expect("trace always holds generation 0")
    }
}

fn record<G: Generator, L: Learner>(
    generator: &G,
    learner: Option<&L>,
    data: Dataset,
    generation: usize,
    seed: u64,
) -> Result<GenerationRecord<G::Model, L::Output>> {
    let model = generator.fit(&data)?;
    let learner_output = match learner {
        Some(l) => Some(l.learn(&data, &mut stream(seed, generation as u64, Purpose::Learner))?),
        None => None,
    };
    let mut metrics = BTreeMap::new();
    metrics.insert("n_real".to_string(), data.real_count() as f64);
    metrics.insert("n_synthetic".to_string(), data.synthetic_count() as f64);
    Ok(GenerationRecord {
        generation,
        model,
        mixed_fingerprint: data.fingerprint(),
        mixed: data,
        learner_output,
        metrics,
    })
}

/// Indices of `S_0` kept in every mixed dataset when the real subset is frozen
/// under a fixed ratio; `None` for any other configuration.
pub fn retained_real_indices(cfg: &StlConfig, n_real: usize) -> Result<Option<Vec<usize>>> {
    match cfg.policy {
        MixPolicy::FixedRatio { alpha, n } if cfg.fixed_real_subset && cfg.generations >= 1 => {
            let mut rng = stream(cfg.seed, 1, Purpose::Mix);
            Ok(Some(subset_indices(n_real, real_share(alpha, n), &mut rng)?))
        }
        _ => Ok(None),
    }
}

/// Runs a self-consuming training loop for `cfg.generations` generations.
///
/// Generation 0 fits on `real` alone. For `j >= 1`, `S_j` is sampled from the
/// generation `j - 1` model, mixed with `real` according to the policy, and
/// generation `j` is fitted on the mix. All randomness is drawn from streams
/// derived from `cfg.seed`.
pub fn run_stl<G: Generator, L: Learner>(
    generator: &G,
    learner: Option<&L>,
    real: &Dataset,
    cfg: &StlConfig,
) -> Result<GenerationTrace<G::Model, L::Output>> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.generations + 1);
    records.push(
        record(generator, learner, real.clone(), 0, cfg.seed).map_err(|e| e.at_generation(0))?,
    );
    let mut history: Vec<Dataset> = Vec::new();

    for j in 1..=cfg.generations {
        let mut step = || -> Result<Dataset> {
            let previous = &records[j - 1].model;
            let mut sample_rng = stream(cfg.seed, j as u64, Purpose::Sample);
            match cfg.policy {
                MixPolicy::FixedRatio { alpha, n } => {
                    let needed = n - real_share(alpha, n);
                    let draw = (needed as f64 * cfg.oversample_factor).ceil() as usize;
                    let synthetic = generator.sample(previous, draw, j, &mut sample_rng)?;
                    let mix_generation = if cfg.fixed_real_subset { 1 } else { j as u64 };
                    let mut mix_rng = stream(cfg.seed, mix_generation, Purpose::Mix);
                    mix_fixed_ratio(real, &synthetic, alpha, n, &mut mix_rng)
                }
                MixPolicy::Accumulate { lambda, .. } => {
                    let count = round_half_up(lambda * real.len() as f64);
                    let synthetic = generator.sample(previous, count, j, &mut sample_rng)?;
                    history.push(synthetic);
                    mix_accumulate(real, &history, lambda)
                }
            }
        };
        let mixed = step().map_err(|e| e.at_generation(j))?;
        records.push(
            record(generator, learner, mixed, j, cfg.seed).map_err(|e| e.at_generation(j))?,
        );
    }

    Ok(GenerationTrace {
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM,
        records,
    })
}
