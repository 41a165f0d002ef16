use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{
    BoundsParams, GaussCollapseParams, GmmStlParams, IclStlParams, LambdaStarParams, SgdStabilityParams,
    TfStabilityParams,
};
use super::output::{tagged, ResultRow};
use crate::bounds::{
    alpha_threshold, drift_factor, gmm_bound_rhs, solve_lambda_star, thm1_rhs, thm3_rhs, thm4_rhs,
    transformer_stability_bound, BoundInputs, BoundReport, GmmBoundForm, Horizon, LambdaStar, LambdaStarInputs,
    TfBoundForm,
};
use crate::divergence::{w2_gauss_1d, DiagGaussian};
use crate::error::Result;
use crate::gmm::{
    empirical_risk, fitted_risk, joint_kl_gmm, population_risk_gmm, sample_true, ClassifierLearner, Gauss1dGenerator,
    GmmGenerator, TrueGmm,
};
use crate::sgd::{
    estimate_uniform_stability, recursive_stability_profile, Coupling, LogisticLoss, SgdConfig, SgdLearner,
    StabilityOptions,
};
use crate::stl::{
    derive_seed, real_share, run_stl, stream, Dataset, Generator, MixPolicy, NoLearner, Point, Provenance, Purpose, StlConfig,
};
use crate::transformer::{fit_ols, IclGenerator, InputLaw, OlsPredictor, TfChain};

/// Builds rows sharing the identifying columns of one cell.
struct RowSink<'a> {
    experiment: &'static str,
    seed: u64,
    rows: &'a mut Vec<ResultRow>,
}

impl RowSink<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, generation: usize, n: usize, alpha: f64, lambda: f64, metric: impl Into<String>, value: f64) {
        self.rows.push(ResultRow {
            experiment: self.experiment.to_string(),
            seed: self.seed,
            generation,
            n,
            alpha,
            lambda,
            metric: metric.into(),
            value,
        });
    }
}

fn coupling(name: &str) -> StabilityOptions {
    StabilityOptions {
        coupling: if name == "independent" {
            Coupling::IndependentNoise
        } else {
            Coupling::Shared
        },
        replace: true,
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Every `(n, alpha)` cell shares `S_0` and the loop streams for a given seed.
pub fn run_gmm_stl(p: &GmmStlParams, seed: u64) -> Result<Vec<ResultRow>> {
    let truth = TrueGmm::axis(p.d, p.sigma2)?;
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "gmm-stl",
        seed,
        rows: &mut rows,
    };
    for &n in &p.n {
        let cell_seed = derive_seed(seed, n as u64, Purpose::Trial);
        let real = sample_true(&truth, n, &mut stream(cell_seed, 0, Purpose::Real));
        let learner = ClassifierLearner {
            m: p.classifier_size(n),
        };
        for &alpha in &p.alpha {
            let mut cfg = StlConfig::new(MixPolicy::FixedRatio { alpha, n }, p.generations, cell_seed);
            cfg.fixed_real_subset = p.fixed_real_subset;
            cfg.oversample_factor = p.oversample_factor;
            let trace = run_stl(
                &GmmGenerator {
                    stratified: p.stratified,
                },
                Some(&learner),
                &real,
                &cfg,
            )?;
            let base = &trace.records[0].model;
            for (j, rec) in trace.records.iter().enumerate() {
                let theta = &rec.learner_output.as_ref().expect("learner configured").theta;
                let pop = population_risk_gmm(theta, &truth);
                let emp = empirical_risk(theta, &rec.mixed, p.sigma2)?;
                let shift = if j == 0 {
                    0.0
                } else {
                    (1.0 - alpha) * (pop - fitted_risk(theta, &trace.records[j - 1].model, p.sigma2)).abs()
                };
                let mut put = |metric: &str, value: f64| sink.push(j, n, alpha, f64::NAN, metric, value);
                put("joint_kl_drift", joint_kl_gmm(&rec.model, base)?);
                put("param_distance", l2(&rec.model.to_vec(), &base.to_vec()));
                put("population_risk", pop);
                put("empirical_risk", emp);
                put("generalization_gap", (pop - emp).abs());
                put("shift_proxy", shift);
                put("variance_floored", rec.model.floored_count() as f64);
                put("n_real", rec.metrics["n_real"]);
                put("n_synthetic", rec.metrics["n_synthetic"]);
            }
        }
    }
    Ok(rows)
}

pub fn run_gauss_collapse(p: &GaussCollapseParams, seed: u64) -> Result<Vec<ResultRow>> {
    let truth = DiagGaussian::univariate(p.mean, p.var)?;
    let sd = p.var.sqrt();
    let mut rng = stream(seed, 0, Purpose::Real);
    let points = (0..p.n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            Point::scalar(vec![p.mean + sd * g], 1.0, Provenance::Real)
        })
        .collect();
    let real = Dataset::from_points(1, points)?;
    let cfg = StlConfig::new(MixPolicy::FixedRatio { alpha: p.alpha, n: p.n }, p.generations, seed);
    let trace = run_stl::<_, NoLearner>(&Gauss1dGenerator, None, &real, &cfg)?;
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "gauss-collapse",
        seed,
        rows: &mut rows,
    };
    for (j, rec) in trace.records.iter().enumerate() {
        let fitted = DiagGaussian::univariate(rec.model.mean, rec.model.var.max(0.0))?;
        sink.push(j, p.n, p.alpha, f64::NAN, "w2_to_truth", w2_gauss_1d(&fitted, &truth)?);
        sink.push(j, p.n, p.alpha, f64::NAN, "fitted_var", rec.model.var);
    }
    Ok(rows)
}

/// All cells reuse the replicate seed, so cells differ only in their settings.
pub fn run_tf_stability(p: &TfStabilityParams, seed: u64) -> Result<Vec<ResultRow>> {
    let mut cells = Vec::new();
    for &n in &p.n {
        for &l in &p.layers {
            for &b_w in &p.b_w {
                for &alpha in &p.alpha {
                    cells.push((n, l, b_w, alpha));
                }
            }
        }
    }
    let opts = coupling(&p.coupling);
    let per_cell = cells
        .par_iter()
        .map(|&(n, l, b_w, alpha)| -> Result<Vec<ResultRow>> {
            let mut chain = TfChain::new(p.d, l, b_w, alpha)?;
            chain.fixed_real_subset = p.fixed_real_subset;
            chain.replace_retained = p.replace == "retained";
            let profile = recursive_stability_profile(&chain, n, p.generations, p.trials, seed, opts)?;
            let mut rows = Vec::new();
            let mut sink = RowSink {
                experiment: "tf-stability",
                seed,
                rows: &mut rows,
            };
            let tags = [("L", l.to_string()), ("bw", format!("{b_w:?}"))];
            for (i, rep) in profile.iter().enumerate() {
                let full = transformer_stability_bound(n, l, b_w, alpha, i, TfBoundForm::Full)?;
                let theorem = transformer_stability_bound(n, l, b_w, alpha, i, TfBoundForm::Theorem)?;
                let mut put = |base: &str, v: f64| sink.push(i, n, alpha, f64::NAN, tagged(base, &tags), v);
                put("stability_max", rep.estimate);
                put("stability_p95", rep.p95);
                put("stability_median", rep.median);
                put("stability_mean", rep.mean);
                put("bound_full", full);
                put("bound_theorem", theorem);
                put("ratio_full", rep.estimate / full);
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn query_law(name: &str) -> InputLaw {
    if name == "unit-ball" {
        InputLaw::UnitBall
    } else {
        InputLaw::StandardGaussian
    }
}

/// Squared errors of one task, indexed `[arm][loop - 1]`.
fn icl_task(p: &IclStlParams, task_seed: u64) -> Result<Vec<Vec<f64>>> {
    let law = query_law(&p.query_law);
    let mut task_rng = stream(task_seed, 0, Purpose::Task);
    let w: Vec<f64> = (0..p.d).map(|_| task_rng.sample(StandardNormal)).collect();
    let dot = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let draw_real = |count: usize, generation: usize| -> Result<Dataset> {
        let mut rng = stream(task_seed, generation as u64, Purpose::Real);
        let mut out = Dataset::with_capacity(p.d, count);
        for _ in 0..count {
            let x = law.draw(p.d, &mut rng);
            let g: f64 = rng.sample(StandardNormal);
            let y = dot(&x) + p.label_noise * g;
            out.push(Point::scalar(x, y, Provenance::Real))?;
        }
        Ok(out)
    };
    let real = draw_real(p.context, 0)?;
    let mut eval_rng = stream(task_seed, 0, Purpose::Eval);
    let queries: Vec<Vec<f64>> = (0..p.loops).map(|_| law.draw(p.d, &mut eval_rng)).collect();
    let generator = IclGenerator {
        predictor: OlsPredictor { ridge: p.ridge },
        law,
        label_noise: p.label_noise,
    };
    let loss = |data: &Dataset, q: &[f64]| -> Result<f64> {
        let fit = fit_ols(data, p.ridge)?;
        let prediction: f64 = fit.weights.iter().zip(q).map(|(a, b)| a * b).sum();
        Ok((prediction - dot(q)).powi(2))
    };
    p.alpha
        .iter()
        .map(|&alpha| {
            if p.real_source == "initial" {
                let cfg = StlConfig::new(MixPolicy::FixedRatio { alpha, n: p.context }, p.loops - 1, task_seed);
                let trace = run_stl::<_, NoLearner>(&generator, None, &real, &cfg)?;
                return trace.records.iter().zip(&queries).map(|(rec, q)| loss(&rec.mixed, q)).collect();
            }
            // Each loop mixes newly collected real examples of the same task
            // with the previous model's outputs.
            let k = real_share(alpha, p.context);
            let mut data = real.clone();
            let mut losses = vec![loss(&data, &queries[0])?];
            for (j, q) in queries.iter().enumerate().skip(1) {
                let model = generator.fit(&data)?;
                let synthetic =
                    generator.sample(&model, p.context - k, j, &mut stream(task_seed, j as u64, Purpose::Sample))?;
                data = draw_real(k, j)?;
                for pt in synthetic.points() {
                    data.push(pt.clone())?;
                }
                losses.push(loss(&data, q)?);
            }
            Ok(losses)
        })
        .collect()
}

/// Loop `k` evaluates the model of generation `k - 1` on fresh queries against
/// the noiseless target, averaged over `tasks` tasks.
pub fn run_icl_stl(p: &IclStlParams, seed: u64) -> Result<Vec<ResultRow>> {
    let per_task = (0..p.tasks)
        .into_par_iter()
        .map(|t| icl_task(p, derive_seed(seed, t as u64, Purpose::Task)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "icl-stl",
        seed,
        rows: &mut rows,
    };
    for (arm, &alpha) in p.alpha.iter().enumerate() {
        for k in 0..p.loops {
            let mean = per_task.iter().map(|t| t[arm][k]).sum::<f64>() / p.tasks as f64;
            sink.push(k + 1, p.context, alpha, f64::NAN, "eval_loss", mean);
        }
    }
    Ok(rows)
}

pub fn run_sgd_stability(p: &SgdStabilityParams, seed: u64) -> Result<Vec<ResultRow>> {
    let d = p.d;
    let mut teacher = vec![0.0; d];
    teacher[0] = p.teacher_norm;
    let sampler = move |rng: &mut crate::stl::StlRng| {
        let x = InputLaw::UnitBall.draw(d, rng);
        let s: f64 = x.iter().zip(&teacher).map(|(a, b)| a * b).sum();
        let y = if rng.random::<f64>() < 1.0 / (1.0 + (-s).exp()) { 1.0 } else { 0.0 };
        Point::scalar(x, y, Provenance::Real)
    };
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "sgd-stability",
        seed,
        rows: &mut rows,
    };
    for &n in &p.n {
        let mut config = SgdConfig::new(p.kappa, p.t_factor * n);
        config.radius = p.radius;
        config.step_scale = p.step_scale;
        let learner = SgdLearner {
            loss: LogisticLoss,
            config,
            lipschitz: Some(1.0),
        };
        let rep = estimate_uniform_stability(&learner, &sampler, n, p.trials, p.probe, seed, coupling(&p.coupling))?;
        let mut put = |metric: &str, v: f64| sink.push(0, n, f64::NAN, f64::NAN, metric, v);
        put("beta_max", rep.estimate);
        put("beta_p95", rep.p95);
        put("beta_median", rep.median);
        put("beta_mean", rep.mean);
        put("beta_rate", rep.rate.unwrap_or(f64::NAN));
        put("beta_mean_scaled", rep.mean * n as f64 / (n as f64).ln());
    }
    Ok(rows)
}

fn push_report(sink: &mut RowSink, prefix: &str, report: &BoundReport, i: usize, n: usize, alpha: f64, lambda: f64) {
    sink.push(i, n, alpha, lambda, format!("{prefix}_total"), report.total);
    for (name, v) in &report.terms {
        sink.push(i, n, alpha, lambda, format!("{prefix}_term{{{name}}}"), *v);
    }
}

pub fn run_bounds(p: &BoundsParams, seed: u64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "bounds",
        seed,
        rows: &mut rows,
    };
    for &n in &p.n {
        for &alpha in &p.alpha {
            for &i in &p.i {
                let inp = BoundInputs {
                    n,
                    alpha,
                    i,
                    lambda: p.lambda,
                    delta: p.delta,
                    m: p.m,
                    rho: p.rho,
                    kappa: p.kappa,
                    b_w: p.b_w,
                    l: p.layers,
                    d_tv: p.d_tv,
                    beta_n: p.beta_n,
                    gamma_n_i: p.gamma_n_i,
                };
                let nan = f64::NAN;
                push_report(&mut sink, "thm1", &thm1_rhs(&inp, p.proof_form)?, i, n, alpha, nan);
                push_report(&mut sink, "thm3", &thm3_rhs(&inp)?, i, n, alpha, nan);
                push_report(&mut sink, "thm4", &thm4_rhs(&inp)?, i, n, alpha, p.lambda);
                let tf = |form| transformer_stability_bound(n, p.layers, p.b_w, alpha, i, form);
                sink.push(i, n, alpha, nan, "tf_bound_full", tf(TfBoundForm::Full)?);
                sink.push(i, n, alpha, nan, "tf_bound_theorem", tf(TfBoundForm::Theorem)?);
                sink.push(i, n, alpha, nan, "drift_factor", drift_factor(alpha, i)?);
                if i >= 1 {
                    let t = alpha_threshold(p.b_w, p.layers, Horizon::Finite(i))?;
                    sink.push(i, n, alpha, nan, "alpha_threshold", t);
                }
                let g = |form| gmm_bound_rhs(n, p.d, alpha, i, p.delta, form).map(|r| r.total);
                sink.push(i, n, alpha, nan, "gmm_stability_bound", g(GmmBoundForm::Stability)?);
                sink.push(i, n, alpha, nan, "gmm_generalization_bound", g(GmmBoundForm::Generalization)?);
            }
        }
    }
    Ok(rows)
}

/// `lambda` column carries the solution; the value is the same number, `nan`
/// when the condition never holds.
pub fn run_lambda_star(p: &LambdaStarParams, seed: u64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut sink = RowSink {
        experiment: "lambda-star",
        seed,
        rows: &mut rows,
    };
    for &n in &p.n {
        for &c in &p.c {
            let sol = solve_lambda_star(&LambdaStarInputs {
                n,
                i: p.i,
                rho: p.rho,
                m: p.m,
                b_w: p.b_w,
                l: p.layers,
                delta: p.delta,
                c,
            })?;
            let value = sol.value().unwrap_or(f64::NAN);
            let multi = matches!(sol, LambdaStar::Crossing { multi_root: true, .. });
            let tags = [("c", format!("{c:?}"))];
            sink.push(p.i, n, f64::NAN, value, tagged("lambda_star", &tags), value);
            sink.push(p.i, n, f64::NAN, value, tagged("lambda_star_multi_root", &tags), multi as u8 as f64);
        }
    }
    Ok(rows)
}
