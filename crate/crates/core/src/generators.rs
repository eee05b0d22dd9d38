//! Synthetic sparse low-rank problems and the observation noise model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, DenseMatrix};
use crate::rng::{rng_from_seed, standard_normal};
use crate::sampling::{project, ObservationMask};

/// `M = M_L · M_R` with Bernoulli-sparse uniform factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Probability that an entry of the `m × r` left factor is zero.
    pub zero_frac_left: f64,
    /// Probability that an entry of the `r × n` right factor is zero.
    pub zero_frac_right: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(m: usize, n: usize, r: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            r,
            zero_frac_left: 0.7,
            zero_frac_right: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r > self.m.min(self.n) {
            return Err(Error::param(format!(
                "rank {} exceeds min({}, {})",
                self.r, self.m, self.n
            )));
        }
        for f in [self.zero_frac_left, self.zero_frac_right] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::param(format!("zero fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub seed: u64,
}

pub fn gen_low_rank_sparse(spec: &GeneratorSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut factor = |rows: usize, cols: usize, zero_frac: f64| {
        DenseMatrix::from_fn(rows, cols, |_, _| {
            let zero = rng.random::<f64>() < zero_frac;
            let value: f64 = rng.random();
            if zero {
                0.0
            } else {
                value
            }
        })
    };
    let left = factor(spec.m, spec.r, spec.zero_frac_left);
    let right = factor(spec.r, spec.n, spec.zero_frac_right);
    left.matmul(&right)
}

/// Fraction of entries that are exactly nonzero.
pub fn density(m: &DenseMatrix) -> f64 {
    let total = m.rows() * m.cols();
    if total == 0 {
        return 0.0;
    }
    m.as_slice().iter().filter(|&&v| v != 0.0).count() as f64 / total as f64
}

/// Divides by the largest singular value.
pub fn normalize_spectral(m: &DenseMatrix) -> Result<DenseMatrix> {
    if m.is_zero() {
        return Err(Error::param("cannot normalize the zero matrix"));
    }
    // fixed seed: the normalization of a given matrix is a pure function
    let s = spectral_norm(m, 1e-15, 100_000, &mut rng_from_seed(0x5eed));
    Ok(m.scale(1.0 / s.value))
}

/// Returns `B` with `P_Ω(B) = P_Ω(M) + P_Ω(Z)`, where
/// `Z = ε · ‖P_Ω(M)‖_F / ‖P_Ω(N)‖_F · N` and `N` is i.i.d. standard normal
/// on Ω. Entries on Ω^c are copied from `M`.
pub fn add_noise(m: &DenseMatrix, mask: &ObservationMask, noise: &NoiseSpec) -> Result<DenseMatrix> {
    if !(noise.epsilon >= 0.0) || !noise.epsilon.is_finite() {
        return Err(Error::param(format!("noise epsilon {} must be >= 0", noise.epsilon)));
    }
    if m.shape() != mask.shape() {
        return Err(Error::dims(mask.shape(), m.shape()));
    }
    if noise.epsilon == 0.0 {
        return Ok(m.clone());
    }
    if mask.is_empty() {
        return Err(Error::param("noise needs at least one observed entry"));
    }
    let mut rng = rng_from_seed(noise.seed);
    let mut raw = DenseMatrix::zeros(m.rows(), m.cols());
    for (i, j) in mask.observed_pairs() {
        raw.set(i, j, standard_normal(&mut rng));
    }
    let observed_norm = project(m, mask)?.frobenius_norm();
    let raw_norm = raw.frobenius_norm();
    let scale = noise.epsilon * observed_norm / raw_norm;
    let mut b = m.clone();
    for (i, j) in mask.observed_pairs() {
        b.set(i, j, m.get(i, j) + scale * raw.get(i, j));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::exact_svd;

    #[test]
    fn dense_full_rank_product() {
        let spec = GeneratorSpec {
            zero_frac_left: 0.0,
            zero_frac_right: 0.0,
            ..GeneratorSpec::new(6, 6, 6, 1)
        };
        let m = gen_low_rank_sparse(&spec).unwrap();
        assert!(exact_svd(&m).sigma[5] > 1e-10);
        assert_eq!(density(&m), 1.0);
    }

    #[test]
    fn all_zero_left_factor() {
        let spec = GeneratorSpec {
            zero_frac_left: 1.0,
            ..GeneratorSpec::new(5, 4, 2, 9)
        };
        assert!(gen_low_rank_sparse(&spec).unwrap().is_zero());
    }

    #[test]
    fn rank_bound_and_nonnegativity() {
        for seed in 0..5 {
            let m = gen_low_rank_sparse(&GeneratorSpec::new(30, 25, 4, seed)).unwrap();
            assert!(m.as_slice().iter().all(|&v| v >= 0.0));
            if m.is_zero() {
                continue;
            }
            let sigma = exact_svd(&normalize_spectral(&m).unwrap()).sigma;
            assert!(sigma[4] < 1e-10);
        }
    }

    #[test]
    fn generator_rejects_bad_spec() {
        assert!(gen_low_rank_sparse(&GeneratorSpec::new(3, 3, 4, 0)).is_err());
        let bad = GeneratorSpec {
            zero_frac_right: 1.2,
            ..GeneratorSpec::new(3, 3, 1, 0)
        };
        assert!(gen_low_rank_sparse(&bad).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_spectral(&DenseMatrix::from_diag(&[5.0, 3.0])).unwrap();
        assert!(n.max_abs_diff(&DenseMatrix::from_diag(&[1.0, 0.6])) < 1e-12);
        let again = normalize_spectral(&n).unwrap();
        assert!(again.max_abs_diff(&n) < 1e-10);
        assert!(normalize_spectral(&DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn noise_norm_identity() {
        let m = DenseMatrix::from_fn(8, 7, |i, j| ((i * 7 + j) as f64).sin());
        let mask = ObservationMask::from_fn(8, 7, |i, j| (i + 2 * j) % 3 != 0);
        for eps in [1e-4, 1e-3, 0.5] {
            let b = add_noise(&m, &mask, &NoiseSpec { epsilon: eps, seed: 3 }).unwrap();
            let ratio = project(&b.sub(&m).unwrap(), &mask).unwrap().frobenius_norm()
                / project(&m, &mask).unwrap().frobenius_norm();
            assert!((ratio - eps).abs() <= 1e-12 * eps);
            let missing = mask.complement();
            assert!(project(&b.sub(&m).unwrap(), &missing).unwrap().is_zero());
        }
        let b = add_noise(&m, &mask, &NoiseSpec { epsilon: 0.0, seed: 3 }).unwrap();
        assert_eq!(b, m);
        let empty = ObservationMask::empty(8, 7);
        assert!(add_noise(&m, &empty, &NoiseSpec { epsilon: 0.1, seed: 0 }).is_err());
    }
}
