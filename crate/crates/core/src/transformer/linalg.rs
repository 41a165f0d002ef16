use nalgebra::{DMatrix, DVector};

pub const POWER_ITERATIONS: usize = 200;
pub const POWER_TOLERANCE: f64 = 1e-12;

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() || a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let n = a.ncols();
    // Non-symmetric start so that structured matrices are not hit orthogonally.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 / (i as f64 + 1.0));
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let av = a * &v;
        let mut w = a.transpose() * &av;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        let next = (a * &w).norm();
        let done = (next - sigma).abs() <= POWER_TOLERANCE * next;
        sigma = next;
        v = w;
        if done {
            break;
        }
    }
    sigma
}

/// Rescales `a` to spectral norm `cap` when it exceeds it.
pub fn project_spectral(a: &DMatrix<f64>, cap: f64) -> DMatrix<f64> {
    let norm = spectral_norm(a);
    if norm > cap {
        a * (cap / norm)
    } else {
        a.clone()
    }
}

/// Row-wise `l2` norms.
pub fn row_norms(a: &DMatrix<f64>) -> Vec<f64> {
    a.row_iter().map(|r| r.norm()).collect()
}

/// `||A||_{2,1}`: sum of row `l2` norms.
pub fn norm_2_1(a: &DMatrix<f64>) -> f64 {
    row_norms(a).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_norm() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 2.0]));
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn matches_dense_svd() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.2, 0.1, -0.7]);
        let svd = a.clone().svd(false, false);
        let top = svd.singular_values.max();
        assert!((spectral_norm(&a) - top).abs() < 1e-9);
    }
}
