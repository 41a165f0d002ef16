use rand::Rng;

use crate::error::{Error, Result};
use crate::stl::{stream, Dataset, Point, Purpose};

/// A per-example loss with a gradient in the weights.
pub trait Loss {
    fn value(&self, w: &[f64], z: &Point) -> f64;
    fn gradient(&self, w: &[f64], z: &Point) -> Vec<f64>;
}

/// Logistic loss for labels in `{0, 1}`: `log(1 + e^s) - y s` with `s = w.x`,
/// evaluated without overflow. Returns `(value, gradient)`.
pub fn logistic_loss(w: &[f64], x: &[f64], y: f64) -> (f64, Vec<f64>) {
    let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    let softplus = if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    };
    let sigmoid = if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    let g = sigmoid - y;
    (softplus - y * s, x.iter().map(|v| g * v).collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticLoss;

impl Loss for LogisticLoss {
    fn value(&self, w: &[f64], z: &Point) -> f64 {
        logistic_loss(w, &z.x, z.label()).0
    }

    fn gradient(&self, w: &[f64], z: &Point) -> Vec<f64> {
        logistic_loss(w, &z.x, z.label()).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Smoothness constant in the step size.
    pub kappa: f64,
    pub iterations: usize,
    /// Step size is `step_scale / (kappa t)`.
    pub step_scale: f64,
    /// Starting weights; zero when `None`.
    pub init: Option<Vec<f64>>,
    /// Iterates are projected onto the ball of this radius.
    pub radius: f64,
}

impl SgdConfig {
    pub fn new(kappa: f64, iterations: usize) -> Self {
        SgdConfig {
            kappa,
            iterations,
            step_scale: 1.0,
            init: None,
            radius: 10.0,
        }
    }

    pub fn step(&self, t: usize) -> f64 {
        self.step_scale / (self.kappa * t as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        Ok(())
    }
}

fn project_ball(w: &mut [f64], radius: f64) {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

/// `w_{t+1} = P_R(w_t - eta_t grad l(w_t, z_{i_t}))` with `i_t` uniform with
/// replacement, `t = 1..=T`. The index sequence depends only on `seed` and `n`.
pub fn sgd_train<L: Loss + ?Sized>(
    data: &Dataset,
    loss: &L,
    cfg: &SgdConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("data", "must be nonempty"));
    }
    let mut w = match &cfg.init {
        Some(init) if init.len() != data.dim() => {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![0.0; data.dim()],
    };
    project_ball(&mut w, cfg.radius);
    let mut rng = stream(seed, 0, Purpose::Sgd);
    for t in 1..=cfg.iterations {
        let i = rng.random_range(0..data.len());
        let g = loss.gradient(&w, &data.points()[i]);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: t });
        }
        let eta = cfg.step(t);
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= eta * gk;
        }
        project_ball(&mut w, cfg.radius);
    }
    Ok(w)
}

/// SGD bundled with its loss, usable by the stability estimators.
#[derive(Debug, Clone)]
pub struct SgdLearner<L> {
    pub loss: L,
    pub config: SgdConfig,
    /// Lipschitz constant of the loss over the weight ball, when known.
    pub lipschitz: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{Provenance, rng_from_seed};
    use proptest::prelude::{any, prop_assert, proptest};

    struct Quadratic {
        kappa: f64,
    }

    impl Loss for Quadratic {
        fn value(&self, w: &[f64], z: &Point) -> f64 {
            0.5 * self.kappa * (w[0] - z.x[0]).powi(2)
        }
        fn gradient(&self, w: &[f64], z: &Point) -> Vec<f64> {
            vec![self.kappa * (w[0] - z.x[0])]
        }
    }

    struct Flat;

    impl Loss for Flat {
        fn value(&self, _w: &[f64], _z: &Point) -> f64 {
            1.0
        }
        fn gradient(&self, w: &[f64], _z: &Point) -> Vec<f64> {
            vec![0.0; w.len()]
        }
    }

    fn one_point(v: f64) -> Dataset {
        Dataset::from_points(1, vec![Point::scalar(vec![v], 0.0, Provenance::Real)]).unwrap()
    }

    #[test]
    fn first_step_lands_on_quadratic_minimum() {
        let loss = Quadratic { kappa: 2.0 };
        let data = one_point(1.0);
        let w1 = sgd_train(&data, &loss, &SgdConfig::new(2.0, 1), 0).unwrap();
        assert_eq!(w1, vec![1.0]);
        let w50 = sgd_train(&data, &loss, &SgdConfig::new(2.0, 50), 0).unwrap();
        assert_eq!(w50, vec![1.0]);
        assert!(sgd_train(&data, &loss, &SgdConfig::new(2.0, 0), 0).is_err());
    }

    #[test]
    fn flat_loss_never_moves() {
        let mut cfg = SgdConfig::new(1.0, 100);
        cfg.init = Some(vec![0.3]);
        assert_eq!(sgd_train(&one_point(5.0), &Flat, &cfg, 9).unwrap(), vec![0.3]);
    }

    #[test]
    fn seeds_drive_the_index_path() {
        let mut rng = rng_from_seed(2);
        let pts = (0..20)
            .map(|i| {
                let x = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                Point::scalar(x, (i % 2) as f64, Provenance::Real)
            })
            .collect();
        let data = Dataset::from_points(2, pts).unwrap();
        let cfg = SgdConfig::new(0.25, 40);
        let a = sgd_train(&data, &LogisticLoss, &cfg, 1).unwrap();
        assert_eq!(a, sgd_train(&data, &LogisticLoss, &cfg, 1).unwrap());
        assert_ne!(a, sgd_train(&data, &LogisticLoss, &cfg, 2).unwrap());
    }

    #[test]
    fn logistic_values() {
        let (v0, _) = logistic_loss(&[0.0, 0.0], &[0.3, -2.0], 1.0);
        let (v1, _) = logistic_loss(&[0.0, 0.0], &[0.3, -2.0], 0.0);
        assert!((v0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((v1 - std::f64::consts::LN_2).abs() < 1e-15);
        let (far, _) = logistic_loss(&[800.0], &[1.0], 1.0);
        assert!((0.0..1e-300).contains(&far));
        let (big, g) = logistic_loss(&[800.0], &[1.0], 0.0);
        assert_eq!(big, 800.0);
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(17);
        let h = 1e-5;
        for _ in 0..200 {
            let w: Vec<f64> = (0..4).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let (_, g) = logistic_loss(&w, &x, y);
            for k in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (logistic_loss(&wp, &x, y).0 - logistic_loss(&wm, &x, y).0) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6, "{fd} vs {}", g[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn iterates_stay_in_ball(seed in any::<u64>(), radius in 0.1f64..3.0) {
            let mut rng = rng_from_seed(seed);
            let pts = (0..10)
                .map(|_| Point::scalar(vec![10.0 * rng.random::<f64>(), -5.0], 1.0, Provenance::Real))
                .collect();
            let data = Dataset::from_points(2, pts).unwrap();
            let mut cfg = SgdConfig::new(0.01, 30);
            cfg.radius = radius;
            let w = sgd_train(&data, &LogisticLoss, &cfg, seed).unwrap();
            prop_assert!(w.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12));
        }
    }
}
