use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{project_spectral, row_norms};
use crate::error::{Error, Result};
use crate::stl::Dataset;

/// A prompt of `n` examples plus one query, as `(2n + 1) x d` tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub z: DMatrix<f64>,
    pub n: usize,
    /// Every row was divided by this to land in the unit ball (1 when untouched).
    pub scale: f64,
}

impl TokenMatrix {
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }
}

/// Lays out `[x_1; y_1; ...; x_n; y_n; x_query]`. Scalar labels become
/// `(y, 0, ..., 0)`; vector labels must already have the token dimension.
pub fn encode_prompt(examples: &Dataset, query: &[f64]) -> Result<TokenMatrix> {
    if examples.is_empty() {
        return Err(Error::invalid("examples", "must be nonempty"));
    }
    let d = examples.dim();
    if query.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: query.len(),
        });
    }
    let n = examples.len();
    let mut z = DMatrix::zeros(2 * n + 1, d);
    for (i, p) in examples.iter().enumerate() {
        for k in 0..d {
            z[(2 * i, k)] = p.x[k];
        }
        match p.y.len() {
            1 => z[(2 * i + 1, 0)] = p.y[0],
            len if len == d => {
                for k in 0..d {
                    z[(2 * i + 1, k)] = p.y[k];
                }
            }
            len => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: len,
                })
            }
        }
    }
    for k in 0..d {
        z[(2 * n, k)] = query[k];
    }
    let max_norm = row_norms(&z).into_iter().fold(0.0, f64::max);
    let scale = max_norm.max(1.0);
    if scale > 1.0 {
        z /= scale;
    }
    Ok(TokenMatrix { z, n, scale })
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Row-stochastic attention weights `softmax(Z W Z^T)`.
pub fn attention_weights(z: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let scores = z * w * z.transpose();
    let mut out = DMatrix::zeros(scores.nrows(), scores.ncols());
    for (i, row) in scores.row_iter().enumerate() {
        let s: Vec<f64> = row.iter().copied().collect();
        for (j, p) in softmax(&s).into_iter().enumerate() {
            out[(i, j)] = p;
        }
    }
    out
}

/// `softmax(Z W Z^T) Z V`.
pub fn attn_layer(z: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    attention_weights(z, w) * z * v
}

/// Row-wise `ReLU(M a)`.
pub fn mlp_layer(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    (a * m.transpose()).map(|v| v.max(0.0))
}

/// One attention + MLP block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

/// Layers whose spectral norms satisfy `||W|| <= B_W`, `||V|| <= 1`, `||M|| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerWeights {
    layers: Vec<LayerWeights>,
    b_w: f64,
}

impl TransformerWeights {
    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn b_w(&self) -> f64 {
        self.b_w
    }

    pub fn dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    /// Gaussian entries with standard deviation `1/sqrt(d)`, then projected.
    pub fn random<R: Rng + ?Sized>(d: usize, depth: usize, b_w: f64, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (d as f64).sqrt();
        let mut draw = || {
            DMatrix::from_fn(d, d, |_, _| {
                let g: f64 = rng.sample(StandardNormal);
                g * scale
            })
        };
        let raw = (0..depth)
            .map(|_| LayerWeights {
                w: draw(),
                v: draw(),
                m: draw(),
            })
            .collect();
        project_weights(raw, b_w)
    }
}

/// Rescales each matrix down to its cap when its spectral norm exceeds it.
pub fn project_weights(raw: Vec<LayerWeights>, b_w: f64) -> Result<TransformerWeights> {
    if !(b_w > 0.0 && b_w.is_finite()) {
        return Err(Error::invalid("B_W", "must be positive"));
    }
    if raw.is_empty() {
        return Err(Error::invalid("layers", "need at least one layer"));
    }
    let d = raw[0].w.nrows();
    let mut layers = Vec::with_capacity(raw.len());
    for layer in raw {
        for m in [&layer.w, &layer.v, &layer.m] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: if m.nrows() != d { m.nrows() } else { m.ncols() },
                });
            }
        }
        layers.push(LayerWeights {
            w: project_spectral(&layer.w, b_w),
            v: project_spectral(&layer.v, 1.0),
            m: project_spectral(&layer.m, 1.0),
        });
    }
    Ok(TransformerWeights { layers, b_w })
}

/// Runs every layer and returns the final query-position token.
pub fn tf_forward(z0: &TokenMatrix, weights: &TransformerWeights) -> Result<Vec<f64>> {
    if z0.dim() != weights.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            found: z0.dim(),
        });
    }
    let mut z = z0.z.clone();
    for layer in weights.layers() {
        z = mlp_layer(&attn_layer(&z, &layer.w, &layer.v), &layer.m);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("transformer forward pass"));
        }
    }
    let last = z.nrows() - 1;
    Ok(z.row(last).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{rng_from_seed, Point, Provenance};
    use crate::transformer::linalg::spectral_norm;

    fn examples(rows: &[(&[f64], f64)]) -> Dataset {
        Dataset::from_points(
            rows[0].0.len(),
            rows.iter()
                .map(|(x, y)| Point::scalar(x.to_vec(), *y, Provenance::Real))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prompt_shape_and_layout() {
        let ex = examples(&[(&[0.1, 0.2], 0.5)]);
        let t = encode_prompt(&ex, &[0.3, 0.0]).unwrap();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.scale, 1.0);
        assert_eq!(t.z.row(0).iter().copied().collect::<Vec<_>>(), vec![0.1, 0.2]);
        assert_eq!(t.z.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0]);
        assert_eq!(t.z.row(2).iter().copied().collect::<Vec<_>>(), vec![0.3, 0.0]);
    }

    #[test]
    fn prompt_rescales_by_max_row_norm() {
        let ex = examples(&[(&[0.0, 2.0], 1.0), (&[0.5, 0.0], -0.5)]);
        let t = encode_prompt(&ex, &[1.0, 0.0]).unwrap();
        assert_eq!(t.scale, 2.0);
        assert_eq!(t.z[(0, 1)], 1.0);
        assert_eq!(t.z[(1, 0)], 0.5);
        assert_eq!(t.z[(3, 0)], -0.25);
        assert_eq!(t.z[(4, 0)], 0.5);
    }

    #[test]
    fn uniform_attention_averages_rows() {
        let z = DMatrix::from_row_slice(3, 2, &[0.2, 0.4, -0.6, 0.1, 0.1, 0.3]);
        let out = attn_layer(&z, &DMatrix::zeros(2, 2), &DMatrix::identity(2, 2));
        let mean = z.row_mean();
        for r in out.row_iter() {
            assert!((r - &mean).norm() < 1e-15);
        }
        let single = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let w = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(attn_layer(&single, &w, &DMatrix::identity(2, 2)), single);
    }

    #[test]
    fn mlp_identity_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 1.0, 0.5]);
        assert_eq!(mlp_layer(&a, &DMatrix::identity(2, 2)), a);
        let b = DMatrix::from_row_slice(2, 2, &[-0.2, 0.3, 1.0, -0.5]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 1.0, 0.0]);
        assert_eq!(mlp_layer(&b, &DMatrix::identity(2, 2)), expected);
    }

    #[test]
    fn one_trivial_layer_returns_column_mean() {
        let ex = examples(&[(&[0.1, 0.2], 0.3), (&[0.4, 0.0], 0.1)]);
        let t = encode_prompt(&ex, &[0.2, 0.2]).unwrap();
        let weights = project_weights(
            vec![LayerWeights {
                w: DMatrix::zeros(2, 2),
                v: DMatrix::identity(2, 2),
                m: DMatrix::identity(2, 2),
            }],
            0.5,
        )
        .unwrap();
        let out = tf_forward(&t, &weights).unwrap();
        let mean = t.z.row_mean();
        assert!((out[0] - mean[0]).abs() < 1e-15 && (out[1] - mean[1]).abs() < 1e-15);
    }

    #[test]
    fn projection_caps_and_leaves_feasible_alone() {
        let feasible = LayerWeights {
            w: DMatrix::identity(2, 2) * 0.2,
            v: DMatrix::identity(2, 2) * 0.9,
            m: DMatrix::zeros(2, 2),
        };
        let p = project_weights(vec![feasible.clone()], 0.5).unwrap();
        assert_eq!(p.layers()[0], feasible);

        let w = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]) * 1.0; // orthogonal, norm 1
        let p = project_weights(
            vec![LayerWeights {
                w,
                v: DMatrix::identity(2, 2),
                m: DMatrix::identity(2, 2),
            }],
            0.5,
        )
        .unwrap();
        assert!((spectral_norm(&p.layers()[0].w) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn random_weights_respect_caps() {
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let w = TransformerWeights::random(5, 2, 0.25, &mut rng).unwrap();
            for l in w.layers() {
                assert!(spectral_norm(&l.w) <= 0.25 + 1e-9);
                assert!(spectral_norm(&l.v) <= 1.0 + 1e-9);
                assert!(spectral_norm(&l.m) <= 1.0 + 1e-9);
            }
        }
    }
}
