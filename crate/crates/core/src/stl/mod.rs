//! Datasets, mixing policies, seeded streams and the loop driver.

pub mod dataset;
pub mod engine;
pub mod mix;
pub mod rng;

pub use dataset::{Dataset, Point, Provenance};
pub use engine::{
    retained_real_indices, run_stl, GenerationRecord, GenerationTrace, Generator, Learner, NoLearner, StlConfig,
};
pub use mix::{mix_accumulate, mix_fixed_ratio, real_share, round_half_up, subset_indices, MixPolicy};
pub use rng::{derive_seed, rng_from_seed, stream, Purpose, StlRng, RNG_ALGORITHM};
