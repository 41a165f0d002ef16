//! Self-consuming training loops: mixing real and synthetic data across
//! generations, with Gaussian-mixture, in-context transformer and SGD
//! instantiations, stability estimators and bound evaluators.

// `!(x > 0.0)` is used on purpose so that NaN lands on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod gmm;
pub mod sgd;
pub mod stats;
pub mod stl;
pub mod transformer;

pub use error::{Error, Result};
