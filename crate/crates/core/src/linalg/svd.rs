//! Exact and randomized truncated singular value decompositions.

use nalgebra::DMatrix;

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng::{standard_normal, SolverRng};

/// Truncated SVD `X ≈ U · diag(sigma) · Vᵀ`.
///
/// `u` is `m × k`, `v` is `n × k`, both with orthonormal columns, and
/// `sigma` is nonincreasing and nonnegative.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        let k = self.rank();
        for i in 0..us.rows() {
            for j in 0..k {
                let v = us.get(i, j) * self.sigma[j];
                us.set(i, j, v);
            }
        }
        us.matmul_t(&self.v).expect("factor shapes are consistent")
    }

    /// Keeps the leading `k` triples.
    pub fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.rank());
        self.sigma.truncate(k);
        self.u = self.u.leading_columns(k);
        self.v = self.v.leading_columns(k);
        self
    }
}

/// Parameters of the randomized range finder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Extra Gaussian test vectors beyond the target rank.
    pub oversample: usize,
    /// Subspace (power) iterations applied to the sketch.
    pub power_iters: usize,
    /// Matrices with `min(m, n)` at or below this use the exact SVD.
    pub exact_threshold: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 2,
            exact_threshold: 64,
        }
    }
}

/// Thin SVD of `x` with all `min(m, n)` singular triples, sorted.
pub fn exact_svd(x: &DenseMatrix) -> SvdFactors {
    svd_of(&x.to_nalgebra())
}

fn svd_of(m: &DMatrix<f64>) -> SvdFactors {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return SvdFactors {
            u: DenseMatrix::zeros(m.nrows(), 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(m.ncols(), 0),
        };
    }
    let svd = m.clone().svd_unordered(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    SvdFactors {
        u: DenseMatrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])]),
        sigma: order.iter().map(|&j| svd.singular_values[j].max(0.0)).collect(),
        v: DenseMatrix::from_fn(m.ncols(), k, |i, j| v_t[(order[j], i)]),
    }
}

/// Rank-`r` truncated SVD.
///
/// Uses a Gaussian randomized range finder with `opts.oversample` extra
/// samples and `opts.power_iters` subspace iterations, re-orthonormalizing
/// after every multiplication. When `min(m, n) <= opts.exact_threshold` the
/// exact SVD is computed and truncated instead, and `rng` is not touched.
pub fn truncated_svd(
    x: &DenseMatrix,
    r: usize,
    opts: &SvdOptions,
    rng: &mut SolverRng,
) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    let k_max = m.min(n);
    if r == 0 || r > k_max {
        return Err(Error::param(format!(
            "truncation rank {r} must lie in 1..={k_max} for a {m}x{n} matrix"
        )));
    }
    if k_max <= opts.exact_threshold {
        return Ok(exact_svd(x).truncate(r));
    }

    let l = (r + opts.oversample).min(k_max);
    let a = x.to_nalgebra();
    let omega = DMatrix::from_fn(n, l, |_, _| standard_normal(rng));
    let mut q = orthonormal_basis(&a * omega);
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(a.tr_mul(&q));
        q = orthonormal_basis(&a * z);
    }
    let b = q.tr_mul(&a);
    let small = svd_of(&b);
    let u = DenseMatrix::from_nalgebra(&q).matmul(&small.u)?;
    Ok(SvdFactors {
        u,
        sigma: small.sigma,
        v: small.v,
    }
    .truncate(r))
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn gram_error(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q).unwrap();
        g.sub(&DenseMatrix::identity(q.cols())).unwrap().frobenius_norm()
    }

    #[test]
    fn exact_path_on_diagonal() {
        let x = DenseMatrix::from_diag(&[1.0, 5.0, 3.0]);
        let f = truncated_svd(&x, 3, &SvdOptions::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(f.sigma.len(), 3);
        for (s, e) in f.sigma.iter().zip([5.0, 3.0, 1.0]) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_one_truncation_obeys_eckart_young() {
        let x = DenseMatrix::from_diag(&[5.0, 3.0]);
        let f = truncated_svd(&x, 1, &SvdOptions::default(), &mut rng_from_seed(0)).unwrap();
        assert!((f.sigma[0] - 5.0).abs() < 1e-12);
        let resid = x.sub(&f.reconstruct()).unwrap().frobenius_norm();
        assert!((resid - 3.0).abs() < 1e-12);
    }

    #[test]
    fn randomized_recovers_exact_low_rank() {
        let mut rng = rng_from_seed(3);
        let l = DenseMatrix::from_fn(100, 2, |_, _| standard_normal(&mut rng));
        let r = DenseMatrix::from_fn(2, 80, |_, _| standard_normal(&mut rng));
        let x = l.matmul(&r).unwrap();
        let f = truncated_svd(&x, 2, &SvdOptions::default(), &mut rng).unwrap();
        let rel = x.sub(&f.reconstruct()).unwrap().frobenius_norm() / x.frobenius_norm();
        assert!(rel < 1e-8, "relative error {rel}");
        assert!(gram_error(&f.u) < 1e-10);
        assert!(gram_error(&f.v) < 1e-10);
    }

    #[test]
    fn zero_matrix_gives_orthonormal_factors() {
        let x = DenseMatrix::zeros(70, 90);
        let f = truncated_svd(&x, 5, &SvdOptions::default(), &mut rng_from_seed(1)).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert!(gram_error(&f.u) < 1e-10);
        assert!(gram_error(&f.v) < 1e-10);
    }

    #[test]
    fn rejects_bad_rank() {
        let x = DenseMatrix::identity(3);
        let opts = SvdOptions::default();
        assert!(truncated_svd(&x, 4, &opts, &mut rng_from_seed(0)).is_err());
        assert!(truncated_svd(&x, 0, &opts, &mut rng_from_seed(0)).is_err());
    }
}
