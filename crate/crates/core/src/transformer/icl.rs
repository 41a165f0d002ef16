use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::attention::{encode_prompt, tf_forward, TransformerWeights};
use crate::error::{Error, Result};
use crate::stl::{Dataset, Generator, Point, Provenance, StlRng};

/// Law of the query inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLaw {
    /// `N(0, I_d)`.
    StandardGaussian,
    /// Uniform on the unit ball.
    UnitBall,
}

impl InputLaw {
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let InputLaw::UnitBall = self {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: f64 = rng.random();
            let radius = u.powf(1.0 / d as f64);
            let s = if norm > 0.0 { radius / norm } else { 0.0 };
            g.iter_mut().for_each(|v| *v *= s);
        }
        g
    }
}

/// A predictor that conditions on a context and labels queries.
pub trait IclPredictor {
    /// Whatever the predictor keeps from the context.
    type Fitted: Clone + std::fmt::Debug + PartialEq;

    fn condition(&self, context: &Dataset) -> Result<Self::Fitted>;

    fn predict(&self, fitted: &Self::Fitted, query: &[f64]) -> Result<Vec<f64>>;
}

/// Ridge-regularized least squares weights fitted on a context.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub weights: Vec<f64>,
}

pub fn fit_ols(context: &Dataset, ridge: f64) -> Result<OlsFit> {
    if context.is_empty() {
        return Err(Error::invalid("context", "must be nonempty"));
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge", "must be nonnegative"));
    }
    let d = context.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for p in context {
        for a in 0..d {
            rhs[a] += p.x[a] * p.label();
            for b in 0..d {
                gram[(a, b)] += p.x[a] * p.x[b];
            }
        }
    }
    for a in 0..d {
        gram[(a, a)] += ridge;
    }
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = gram.cholesky().ok_or(Error::IllPosed)?;
    let pivots = chol.l_dirty().diagonal();
    if pivots.iter().any(|p| p * p <= 1e-12 * scale) {
        return Err(Error::IllPosed);
    }
    let w = chol.solve(&rhs);
    Ok(OlsFit {
        weights: w.iter().copied().collect(),
    })
}

/// `x_q^T (X^T X + ridge I)^{-1} X^T y`.
pub fn icl_predict_ols(context: &Dataset, query: &[f64], ridge: f64) -> Result<f64> {
    let fit = fit_ols(context, ridge)?;
    if query.len() != fit.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.weights.len(),
            found: query.len(),
        });
    }
    Ok(fit.weights.iter().zip(query).map(|(w, x)| w * x).sum())
}

/// In-context least squares standing in for a trained transformer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsPredictor {
    pub ridge: f64,
}

impl IclPredictor for OlsPredictor {
    type Fitted = OlsFit;

    fn condition(&self, context: &Dataset) -> Result<OlsFit> {
        fit_ols(context, self.ridge)
    }

    fn predict(&self, fitted: &OlsFit, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != fitted.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: fitted.weights.len(),
                found: query.len(),
            });
        }
        Ok(vec![fitted.weights.iter().zip(query).map(|(w, x)| w * x).sum()])
    }
}

/// The normalized transformer: the prediction is the whole output token.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerPredictor {
    pub weights: TransformerWeights,
}

impl IclPredictor for TransformerPredictor {
    type Fitted = Dataset;

    fn condition(&self, context: &Dataset) -> Result<Dataset> {
        if context.is_empty() {
            return Err(Error::invalid("context", "must be nonempty"));
        }
        Ok(context.clone())
    }

    fn predict(&self, context: &Dataset, query: &[f64]) -> Result<Vec<f64>> {
        tf_forward(&encode_prompt(context, query)?, &self.weights)
    }
}

/// Always predicts zero; a reference point for tests and baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPredictor;

impl IclPredictor for ZeroPredictor {
    type Fitted = ();

    fn condition(&self, _context: &Dataset) -> Result<()> {
        Ok(())
    }

    fn predict(&self, _fitted: &(), _query: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0])
    }
}

/// Draws `count` queries from `law`, labels each with the predictor and, for
/// scalar outputs, adds `N(0, label_noise^2)`. All queries are drawn before any
/// noise so that the stream layout does not depend on the predictor.
#[allow(clippy::too_many_arguments)]
pub fn label_queries<P: IclPredictor, R: Rng + ?Sized>(
    predictor: &P,
    fitted: &P::Fitted,
    d: usize,
    count: usize,
    law: InputLaw,
    label_noise: f64,
    provenance: Provenance,
    rng: &mut R,
) -> Result<Dataset> {
    let queries: Vec<Vec<f64>> = (0..count).map(|_| law.draw(d, rng)).collect();
    let noise: Vec<f64> = (0..count)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            label_noise * g
        })
        .collect();
    let mut out = Dataset::with_capacity(d, count);
    for (x, eps) in queries.into_iter().zip(noise) {
        let mut y = predictor.predict(fitted, &x)?;
        if y.len() == 1 {
            y[0] += eps;
        }
        out.push(Point::vector(x, y, provenance))?;
    }
    Ok(out)
}

/// One round of recursive in-context data generation: condition on `context`,
/// then label `n_queries` fresh inputs.
#[allow(clippy::too_many_arguments)]
pub fn generate_icl_synthetic<P: IclPredictor, R: Rng + ?Sized>(
    predictor: &P,
    context: &Dataset,
    n_queries: usize,
    law: InputLaw,
    label_noise: f64,
    generation: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n_queries == 0 {
        return Ok(Dataset::new(context.dim()));
    }
    let fitted = predictor.condition(context)?;
    label_queries(
        predictor,
        &fitted,
        context.dim(),
        n_queries,
        law,
        label_noise,
        Provenance::Synthetic(generation),
        rng,
    )
}

/// An in-context predictor used as the loop's generative model.
#[derive(Debug, Clone)]
pub struct IclGenerator<P> {
    pub predictor: P,
    pub law: InputLaw,
    pub label_noise: f64,
}

impl<P: IclPredictor> Generator for IclGenerator<P> {
    type Model = (Dataset, P::Fitted);

    fn fit(&self, data: &Dataset) -> Result<Self::Model> {
        Ok((data.clone(), self.predictor.condition(data)?))
    }

    fn sample(
        &self,
        model: &Self::Model,
        count: usize,
        generation: usize,
        rng: &mut StlRng,
    ) -> Result<Dataset> {
        label_queries(
            &self.predictor,
            &model.1,
            model.0.dim(),
            count,
            self.law,
            self.label_noise,
            Provenance::Synthetic(generation),
            rng,
        )
    }
}
