use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use stl_lab::bounds::b_tilde;
use stl_lab::stl::{stream, Purpose, StlRng};
use stl_lab::transformer::{
    attention_weights, attn_layer, mlp_layer, norm_2_1, spectral_norm, TransformerWeights,
};

/// `softmax(Z W Z^T) Z V` with explicit index loops.
fn attention_loops(z: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, d) = (z.nrows(), z.ncols());
    let mut out = DMatrix::zeros(rows, d);
    for i in 0..rows {
        let mut scores = vec![0.0; rows];
        for (j, s) in scores.iter_mut().enumerate() {
            for a in 0..d {
                for b in 0..d {
                    *s += z[(i, a)] * w[(a, b)] * z[(j, b)];
                }
            }
        }
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = scores.iter().map(|s| (s - top).exp()).sum();
        for (j, s) in scores.iter().enumerate() {
            let p = (s - top).exp() / total;
            for k in 0..d {
                let mut zv = 0.0;
                for c in 0..d {
                    zv += z[(j, c)] * v[(c, k)];
                }
                out[(i, k)] += p * zv;
            }
        }
    }
    out
}

/// Rows uniform in direction with norms in `[0, 1]`.
fn unit_ball_rows(rows: usize, d: usize, rng: &mut StlRng) -> DMatrix<f64> {
    let mut z = DMatrix::from_fn(rows, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut row in z.row_iter_mut() {
        let r: f64 = rng.random();
        let norm = row.norm();
        row *= r / norm;
    }
    z
}

#[test]
fn attention_matches_index_loops() {
    let mut rng = stream(4, 0, Purpose::Trial);
    for (rows, d) in [(1, 1), (3, 2), (9, 4), (17, 5)] {
        let z = DMatrix::from_fn(rows, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tf = TransformerWeights::random(d, 1, 0.8, &mut rng).unwrap();
        let layer = &tf.layers()[0];
        let fast = attn_layer(&z, &layer.w, &layer.v);
        let slow = attention_loops(&z, &layer.w, &layer.v);
        assert!((fast - slow).abs().max() < 1e-12);
    }
}

#[test]
fn attention_rows_are_stochastic() {
    let mut rng = stream(5, 0, Purpose::Trial);
    let z = unit_ball_rows(12, 3, &mut rng);
    let tf = TransformerWeights::random(3, 1, 2.0, &mut rng).unwrap();
    let a = attention_weights(&z, &tf.layers()[0].w);
    for row in a.row_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|p| *p >= 0.0));
    }
}

#[test]
fn projected_weights_respect_their_caps() {
    let mut rng = stream(6, 0, Purpose::Weights);
    let tf = TransformerWeights::random(6, 3, 0.3, &mut rng).unwrap();
    for layer in tf.layers() {
        assert!(spectral_norm(&layer.w) <= 0.3 + 1e-9);
        assert!(spectral_norm(&layer.v) <= 1.0 + 1e-9);
        assert!(spectral_norm(&layer.m) <= 1.0 + 1e-9);
    }
}

fn perturb_within_ball(z: &DMatrix<f64>, rng: &mut StlRng) -> DMatrix<f64> {
    // A random fraction of the way to another unit-ball matrix keeps every row
    // inside the ball.
    let target = unit_ball_rows(z.nrows(), z.ncols(), rng);
    let t = 10f64.powf(-3.0 * rng.random::<f64>());
    z + (target - z) * t
}

#[test]
fn one_block_amplifies_perturbations_by_at_most_b_tilde() {
    let mut rng = stream(7, 0, Purpose::Trial);
    let mut worst = 0.0f64;
    for trial in 0..2000 {
        let b_w = [0.25, 0.5, 1.0][trial % 3];
        let (rows, d) = (2 + trial % 15, 1 + trial % 5);
        let tf = TransformerWeights::random(d, 1, b_w, &mut rng).unwrap();
        let layer = &tf.layers()[0];
        let z = unit_ball_rows(rows, d, &mut rng);
        let zp = perturb_within_ball(&z, &mut rng);
        let block = |m: &DMatrix<f64>| mlp_layer(&attn_layer(m, &layer.w, &layer.v), &layer.m);
        let ratio = norm_2_1(&(block(&zp) - block(&z))) / (b_tilde(b_w) * norm_2_1(&(&zp - &z)));
        worst = worst.max(ratio);
    }
    assert!(worst <= 1.0, "worst ratio {worst}");
}

#[test]
fn stack_amplifies_perturbations_by_at_most_b_tilde_to_the_depth() {
    let mut rng = stream(8, 0, Purpose::Trial);
    for trial in 0..500 {
        let (depth, b_w) = (1 + trial % 3, [0.25, 0.5][trial % 2]);
        let tf = TransformerWeights::random(4, depth, b_w, &mut rng).unwrap();
        let z = unit_ball_rows(9, 4, &mut rng);
        let zp = perturb_within_ball(&z, &mut rng);
        let run = |m: &DMatrix<f64>| {
            tf.layers()
                .iter()
                .fold(m.clone(), |acc, l| mlp_layer(&attn_layer(&acc, &l.w, &l.v), &l.m))
        };
        let (out, outp) = (run(&z), run(&zp));
        assert!(out.row_iter().all(|r| r.norm() <= 1.0 + 1e-12));
        let cap = b_tilde(b_w).powi(depth as i32) * norm_2_1(&(&zp - &z));
        assert!(norm_2_1(&(outp - out)) <= cap);
    }
}
