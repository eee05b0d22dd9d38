//! Dense matrices, norms and truncated SVD.

mod io;
mod matrix;
mod svd;

pub use io::{read_dense, read_triplets, write_dense, write_triplets};
pub use matrix::DenseMatrix;
pub use svd::{exact_svd, truncated_svd, SvdFactors, SvdOptions};

use crate::rng::{standard_normal, SolverRng};

impl DenseMatrix {
    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }
}

/// `sqrt(Σ x_ij²)`.
pub fn frobenius_norm(x: &DenseMatrix) -> f64 {
    x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum of singular values (exact SVD).
pub fn nuclear_norm(x: &DenseMatrix) -> f64 {
    exact_svd(x).sigma.iter().sum()
}

/// Outcome of [`spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on `XᵀX` from a Gaussian start.
///
/// Stops when the relative change of the estimate drops below `tol`. A zero
/// matrix returns 0 (converged). Hitting `max_iter` returns the last
/// estimate with `converged == false`.
pub fn spectral_norm(x: &DenseMatrix, tol: f64, max_iter: usize, rng: &mut SolverRng) -> SpectralNorm {
    let (m, n) = x.shape();
    if x.is_zero() || m == 0 || n == 0 {
        return SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    normalize(&mut v);
    let mut xv = vec![0.0; m];
    let mut estimate = 0.0;
    for it in 1..=max_iter {
        mul_vec(x, &v, &mut xv);
        let sigma = norm2(&xv);
        if sigma == 0.0 {
            // start vector landed in the null space; any other direction works
            v.iter_mut().enumerate().for_each(|(i, vi)| *vi = if i == it % n { 1.0 } else { 0.0 });
            continue;
        }
        let mut w = vec![0.0; n];
        mul_t_vec(x, &xv, &mut w);
        normalize(&mut w);
        v = w;
        if (sigma - estimate).abs() <= tol * sigma {
            return SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        estimate = sigma;
    }
    SpectralNorm {
        value: estimate,
        iterations: max_iter,
        converged: false,
    }
}

fn mul_vec(x: &DenseMatrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = x.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn mul_t_vec(x: &DenseMatrix, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &ui) in u.iter().enumerate() {
        for (o, &a) in out.iter_mut().zip(x.row(i)) {
            *o += a * ui;
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn frobenius_examples() {
        assert!((frobenius_norm(&DenseMatrix::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(3, 2)), 0.0);
        assert_eq!(frobenius_norm(&DenseMatrix::from_diag(&[3.0, 4.0])), 5.0);
    }

    #[test]
    fn spectral_norm_examples() {
        let mut rng = rng_from_seed(11);
        let s = spectral_norm(&DenseMatrix::from_diag(&[3.0, 1.0]), 1e-14, 1000, &mut rng);
        assert!(s.converged);
        assert!((s.value - 3.0).abs() < 1e-8);

        let u = [0.6, 0.8];
        let v = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        let x = DenseMatrix::from_fn(2, 3, |i, j| u[i] * v[j]);
        let s = spectral_norm(&x, 1e-14, 1000, &mut rng);
        assert!((s.value - 1.0).abs() < 1e-8);

        let z = spectral_norm(&DenseMatrix::zeros(4, 4), 1e-8, 10, &mut rng);
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn spectral_norm_reports_non_convergence() {
        let mut rng = rng_from_seed(2);
        let x = DenseMatrix::from_diag(&[1.0, 0.999_999]);
        let s = spectral_norm(&x, 1e-16, 3, &mut rng);
        assert!(!s.converged);
        assert_eq!(s.iterations, 3);
        assert!(s.value > 0.99 && s.value <= 1.0 + 1e-12);
    }
}
