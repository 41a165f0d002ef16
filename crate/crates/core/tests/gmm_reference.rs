use stl_lab::divergence::integrate;
use stl_lab::gmm::{
    fit_gmm, joint_kl_gmm, population_risk_gmm, sample_gmm, sample_true, GmmParams, TrueGmm,
};
use stl_lab::stl::{stream, Dataset, Provenance, Purpose};

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Collect each class, then mean and sum of squares in separate passes.
fn two_pass(data: &Dataset) -> GmmParams {
    let d = data.dim();
    let n = data.len() as f64;
    let class = |label: f64| -> Vec<&Vec<f64>> {
        data.iter().filter(|p| (p.label() > 0.0) == (label > 0.0)).map(|p| &p.x).collect()
    };
    let (plus, minus) = (class(1.0), class(-1.0));
    let mean = |xs: &[&Vec<f64>]| -> Vec<f64> {
        (0..d).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / xs.len() as f64).collect()
    };
    let (mp, mm) = (mean(&plus), mean(&minus));
    let var = (0..d)
        .map(|k| {
            let ss = |xs: &[&Vec<f64>], mu: &[f64]| {
                xs.iter().map(|x| (x[k] - mu[k]).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
            };
            plus.len() as f64 / n * ss(&plus, &mp) + minus.len() as f64 / n * ss(&minus, &mm)
        })
        .collect();
    GmmParams {
        mu_plus: mp,
        mu_minus: mm,
        var,
    }
}

#[test]
fn closed_form_fit_matches_two_pass_reference() {
    let truth = TrueGmm::new(unit(&[1.0, -0.5, 2.0]), 0.7).unwrap();
    for seed in 0..20 {
        let data = sample_true(&truth, 37 + seed as usize, &mut stream(seed, 0, Purpose::Real));
        let (fit, reference) = (fit_gmm(&data).unwrap(), two_pass(&data));
        for (a, b) in fit.to_vec().iter().zip(reference.to_vec()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn large_sample_fit_recovers_truth() {
    let truth = TrueGmm::new(unit(&[1.5, -1.0]), 0.5).unwrap();
    let data = sample_true(&truth, 200_000, &mut stream(3, 0, Purpose::Real));
    let fit = fit_gmm(&data).unwrap();
    for k in 0..2 {
        assert!((fit.mu_plus[k] - truth.mu[k]).abs() < 0.01);
        assert!((fit.mu_minus[k] + truth.mu[k]).abs() < 0.01);
        assert!((fit.var[k] - 0.5).abs() < 0.01);
    }
}

#[test]
fn fitted_sampler_reproduces_its_parameters() {
    let params = GmmParams {
        mu_plus: vec![0.3, 2.0],
        mu_minus: vec![-1.0, 0.5],
        var: vec![0.25, 1.5],
    };
    let data = sample_gmm(&params, 200_000, Provenance::Synthetic(1), false, &mut stream(8, 1, Purpose::Sample));
    let fit = fit_gmm(&data).unwrap();
    for (a, b) in fit.to_vec().iter().zip(params.to_vec()) {
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }
    let stratified = sample_gmm(&params, 101, Provenance::Synthetic(1), true, &mut stream(8, 2, Purpose::Sample));
    assert_eq!(stratified.iter().filter(|p| p.label() > 0.0).count(), 51);
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn joint_kl_matches_quadrature_in_one_dimension() {
    let p = GmmParams {
        mu_plus: vec![0.8],
        mu_minus: vec![-1.1],
        var: vec![0.6],
    };
    let q = GmmParams {
        mu_plus: vec![1.3],
        mu_minus: vec![-0.4],
        var: vec![1.4],
    };
    // KL over (x, y) with y uniform on {-1, +1}.
    let class_kl = |mp: f64, mq: f64| {
        integrate(
            |x| {
                let a = normal_pdf(x, mp, p.var[0]);
                if a == 0.0 {
                    0.0
                } else {
                    a * (a.ln() - normal_pdf(x, mq, q.var[0]).ln())
                }
            },
            -20.0,
            20.0,
            64,
            1e-11,
        )
    };
    let numeric = 0.5 * class_kl(p.mu_plus[0], q.mu_plus[0]) + 0.5 * class_kl(p.mu_minus[0], q.mu_minus[0]);
    assert!((joint_kl_gmm(&p, &q).unwrap() - numeric).abs() < 1e-8);
    assert_eq!(joint_kl_gmm(&p, &p).unwrap(), 0.0);
}

#[test]
fn population_risk_matches_monte_carlo() {
    let truth = TrueGmm::new(unit(&[1.0, 0.5]), 0.8).unwrap();
    let theta = [0.7, 0.2];
    let data = sample_true(&truth, 400_000, &mut stream(12, 0, Purpose::Eval));
    let mc = data
        .iter()
        .map(|p| stl_lab::gmm::gmm_loss(&theta, &p.x, p.label(), truth.sigma2))
        .sum::<f64>()
        / data.len() as f64;
    let exact = population_risk_gmm(&theta, &truth);
    assert!((mc - exact).abs() < 0.01 * exact.max(1.0), "{mc} vs {exact}");
}
