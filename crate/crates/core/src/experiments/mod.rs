//! Experiment configs, the runner, CSV output, summaries, checks and plots.

pub mod checks;
pub mod config;
pub mod output;
pub mod runners;
pub mod summary;
pub mod svg;

use rayon::prelude::*;

pub use checks::{run_checks, CheckResult};
pub use config::{emit_config, parse_config, ExperimentConfig, ExperimentParams, EXPERIMENTS};
pub use output::{csv_string, format_value, read_csv, write_csv, ResultRow};
pub use summary::{fit_slopes, render_fits, render_rows, render_summary, summarize, FitKind, GroupStats, SlopeFit};

use crate::error::Result;

/// Runs every replicate (`seed`, `seed + 1`, ...) and returns the rows in
/// output order. Replicates run concurrently; the result does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let replicates = match cfg.params {
        ExperimentParams::Bounds(_) | ExperimentParams::LambdaStar(_) => 1,
        _ => cfg.seeds,
    };
    let per_seed = (0..replicates as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k);
            match &cfg.params {
                ExperimentParams::GmmStl(p) => runners::run_gmm_stl(p, seed),
                ExperimentParams::GaussCollapse(p) => runners::run_gauss_collapse(p, seed),
                ExperimentParams::TfStability(p) => runners::run_tf_stability(p, seed),
                ExperimentParams::IclStl(p) => runners::run_icl_stl(p, seed),
                ExperimentParams::SgdStability(p) => runners::run_sgd_stability(p, seed),
                ExperimentParams::Bounds(p) => runners::run_bounds(p, seed),
                ExperimentParams::LambdaStar(p) => runners::run_lambda_star(p, seed),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by(output::row_order);
    debug_assert!(rows.iter().all(|r| output::is_registered(&r.metric)));
    Ok(rows)
}
