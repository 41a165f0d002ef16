//! Projected SGD with the `c / (kappa t)` schedule, the logistic loss, and
//! empirical estimators of uniform and recursive stability.

mod optimizer;
mod stability;

pub use optimizer::{logistic_loss, sgd_train, LogisticLoss, Loss, SgdConfig, SgdLearner};
pub use stability::{
    estimate_recursive_stability, estimate_uniform_stability, recursive_stability_profile,
    sgd_stability_rate, Coupling, RecursiveChain, StabilityLearner, StabilityOptions,
    StabilityReport,
};
