use super::attention::{encode_prompt, tf_forward, TransformerWeights};
use super::icl::{IclGenerator, InputLaw, TransformerPredictor};
use crate::error::{Error, Result};
use crate::sgd::RecursiveChain;
use crate::stl::{retained_real_indices, run_stl, stream, Dataset, MixPolicy, NoLearner, Point, Provenance, Purpose, StlConfig, StlRng};

/// The transformer generating its own in-context data under a fixed ratio.
///
/// Real examples are `x` uniform in the unit ball with `y = w.x` for a fixed
/// unit vector `w`; synthetic labels are the whole output token. Weights and
/// the evaluation query come from the chain seed, so two coupled chains share
/// them.
///
/// With `fixed_real_subset` every generation keeps the same real examples, and
/// `replace_retained` puts the replaced point among them so it influences
/// every generation rather than only those whose subset happens to contain it.
#[derive(Debug, Clone, PartialEq)]
pub struct TfChain {
    pub d: usize,
    pub depth: usize,
    pub b_w: f64,
    pub alpha: f64,
    pub task: Vec<f64>,
    pub fixed_real_subset: bool,
    pub replace_retained: bool,
}

impl TfChain {
    /// Task vector `(1, ..., 1) / sqrt(d)`.
    pub fn new(d: usize, depth: usize, b_w: f64, alpha: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        if depth == 0 {
            return Err(Error::invalid("L", "must be at least 1"));
        }
        Ok(TfChain {
            d,
            depth,
            b_w,
            alpha,
            task: vec![1.0 / (d as f64).sqrt(); d],
            fixed_real_subset: false,
            replace_retained: false,
        })
    }

    /// Frozen real subset with the replaced point drawn from it.
    pub fn retained(mut self) -> Self {
        self.fixed_real_subset = true;
        self.replace_retained = true;
        self
    }

    fn config(&self, n: usize, generations: usize, seed: u64) -> StlConfig {
        let mut cfg = StlConfig::new(MixPolicy::FixedRatio { alpha: self.alpha, n }, generations, seed);
        cfg.fixed_real_subset = self.fixed_real_subset;
        cfg
    }
}

impl RecursiveChain for TfChain {
    type State = Vec<f64>;

    fn dim(&self) -> usize {
        self.d
    }

    fn draw_point(&self, rng: &mut StlRng) -> Point {
        let x = InputLaw::UnitBall.draw(self.d, rng);
        let y = x.iter().zip(&self.task).map(|(a, b)| a * b).sum();
        Point::scalar(x, y, Provenance::Real)
    }

    fn run(&self, real: &Dataset, generations: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let weights =
            TransformerWeights::random(self.d, self.depth, self.b_w, &mut stream(seed, 0, Purpose::Weights))?;
        let query = InputLaw::UnitBall.draw(self.d, &mut stream(seed, 0, Purpose::Eval));
        let generator = IclGenerator {
            predictor: TransformerPredictor { weights },
            law: InputLaw::UnitBall,
            label_noise: 0.0,
        };
        let cfg = self.config(real.len(), generations, seed);
        let trace = run_stl::<_, NoLearner>(&generator, None, real, &cfg)?;
        trace
            .records
            .iter()
            .map(|r| tf_forward(&encode_prompt(&r.mixed, &query)?, &generator.predictor.weights))
            .collect()
    }

    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> Result<f64> {
        Ok(a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
    }

    fn replaceable(&self, n: usize, generations: usize, seed: u64) -> Result<Option<Vec<usize>>> {
        if !self.replace_retained {
            return Ok(None);
        }
        retained_real_indices(&self.config(n, generations, seed), n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgd::{recursive_stability_profile, StabilityOptions};

    #[test]
    fn identical_initial_data_gives_identical_chains() {
        let chain = TfChain::new(3, 2, 0.5, 0.25).unwrap();
        let opts = StabilityOptions {
            replace: false,
            ..Default::default()
        };
        let profile = recursive_stability_profile(&chain, 8, 3, 5, 11, opts).unwrap();
        assert!(profile.iter().all(|r| r.estimate == 0.0));
    }

    #[test]
    fn retained_subset_is_kept_in_every_generation() {
        let chain = TfChain::new(3, 1, 0.5, 0.5).unwrap().retained();
        let mut rng = stream(9, 0, Purpose::Real);
        let pts = (0..10).map(|_| chain.draw_point(&mut rng)).collect();
        let real = Dataset::from_points(3, pts).unwrap();
        let kept = chain.replaceable(10, 4, 77).unwrap().unwrap();
        assert_eq!(kept.len(), 5);
        let trace = run_stl::<_, NoLearner>(
            &IclGenerator {
                predictor: TransformerPredictor {
                    weights: TransformerWeights::random(3, 1, 0.5, &mut stream(77, 0, Purpose::Weights)).unwrap(),
                },
                law: InputLaw::UnitBall,
                label_noise: 0.0,
            },
            None,
            &real,
            &chain.config(10, 4, 77),
        )
        .unwrap();
        let expected = real.select(&kept);
        for rec in &trace.records[1..] {
            let got: Vec<_> = rec.mixed.points().iter().filter(|p| p.provenance == Provenance::Real).cloned().collect();
            assert_eq!(got, expected.points().to_vec());
        }
    }

    #[test]
    fn outputs_stay_in_unit_ball() {
        let chain = TfChain::new(4, 1, 1.0, 0.0).unwrap();
        let mut rng = stream(5, 0, Purpose::Real);
        let pts = (0..10).map(|_| chain.draw_point(&mut rng)).collect();
        let real = Dataset::from_points(4, pts).unwrap();
        for out in chain.run(&real, 3, 2).unwrap() {
            assert!(out.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        }
    }
}
