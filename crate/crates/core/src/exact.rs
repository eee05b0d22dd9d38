//! Exact solvers for small problems.
//!
//! [`solve_structured_irls_exact`] solves the weighted least-squares program
//! of every Structured IRLS iteration in closed form, and
//! [`solve_structured_nnm`] minimizes `‖X‖_* + α‖P_Ω^c(X)‖` under the
//! observation constraint with ADMM. Both refuse problems with more than
//! [`MAX_EXACT_ENTRIES`] entries.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{exact_svd, DenseMatrix};
use crate::sampling::{gather_missing, project, ObservationMask};
use crate::sirls::{
    check_problem, relative_distance, schatten_surrogate, weight_matrix, Decay, IterationRecord, SolveResult,
};

pub const MAX_EXACT_ENTRIES: usize = 10_000;

fn guard_size(mask: &ObservationMask) -> Result<()> {
    let entries = mask.rows() * mask.cols();
    if entries > MAX_EXACT_ENTRIES {
        return Err(Error::param(format!(
            "exact solvers accept at most {MAX_EXACT_ENTRIES} entries, got {}x{}",
            mask.rows(),
            mask.cols()
        )));
    }
    Ok(())
}

/// Minimizes `Tr(Xᵀ W X) + α Σ_i w_i z_i(X)²` subject to `P_Ω(X) = P_Ω(M)`.
///
/// `W` is `m × m` symmetric positive definite and `w` is aligned with the
/// row-major order of Ω^c. The objective separates over columns: column `j`
/// with missing rows `u` and observed rows `o` solves
/// `(W_uu + α·diag(w_j)) x_u = −W_uo · m_o` by Cholesky.
pub fn structured_irls_iteration(
    x_prev: &DenseMatrix,
    mask: &ObservationMask,
    m_obs: &DenseMatrix,
    weight: &DenseMatrix,
    w: &[f64],
    alpha: f64,
) -> Result<DenseMatrix> {
    let (m, n) = mask.shape();
    if x_prev.shape() != (m, n) || m_obs.shape() != (m, n) {
        return Err(Error::dims((m, n), m_obs.shape()));
    }
    if weight.shape() != (m, m) {
        return Err(Error::dims((m, m), weight.shape()));
    }
    if w.len() != mask.missing_count() {
        return Err(Error::param(format!(
            "sparsity weight length {} does not match {} missing entries",
            w.len(),
            mask.missing_count()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::param("alpha must be nonnegative"));
    }
    if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::param("sparsity weights must be positive and finite"));
    }

    let mut slot = vec![usize::MAX; m * n];
    for (pos, &k) in mask.missing_indices().iter().enumerate() {
        slot[k] = pos;
    }

    let mut x = project(m_obs, mask)?;
    for j in 0..n {
        let (free, fixed): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| !mask.is_observed(i, j));
        if free.is_empty() {
            continue;
        }
        let a = DMatrix::from_fn(free.len(), free.len(), |r, c| {
            let mut v = weight.get(free[r], free[c]);
            if r == c {
                v += alpha * w[slot[free[r] * n + j]];
            }
            v
        });
        let rhs = DVector::from_fn(free.len(), |r, _| {
            -fixed
                .iter()
                .map(|&o| weight.get(free[r], o) * m_obs.get(o, j))
                .sum::<f64>()
        });
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Numerical(format!("column {j}: weighted system is not positive definite"))
        })?;
        let sol = chol.solve(&rhs);
        for (r, &i) in free.iter().enumerate() {
            if !sol[r].is_finite() {
                return Err(Error::Numerical(format!("column {j}: non-finite solution")));
            }
            x.set(i, j, sol[r]);
        }
    }
    Ok(x)
}

/// `(X Xᵀ + γI)^{p/2−1}`, the `m × m` weight acting on columns.
pub fn column_weight(x: &DenseMatrix, gamma: f64, p: f64) -> Result<DenseMatrix> {
    let xt = x.transpose();
    weight_matrix(&xt, gamma, p, xt.rows().min(xt.cols()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactIrlsConfig {
    pub p: f64,
    pub q: f64,
    /// Weight of the sparsity penalty; 0 gives plain IRLS-p.
    pub alpha: f64,
    pub gamma: Decay,
    pub eps: Decay,
    /// Lower bound on `γ^k`, keeping the per-column systems well conditioned.
    pub gamma_min: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExactIrlsConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            alpha: 1e-2,
            gamma: Decay::Geometric { first: 0.5, ratio: 0.5 },
            eps: Decay::Geometric { first: 0.9, ratio: 0.9 },
            gamma_min: 1e-14,
            tol: 1e-5,
            max_iter: 1000,
        }
    }
}

impl ExactIrlsConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) {
            return Err(Error::param("p and q must lie in [0, 1]"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::param("alpha must be nonnegative"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.gamma_min > 0.0) {
            return Err(Error::param("tol, max_iter and gamma_min must be positive"));
        }
        self.gamma.validate("gamma")?;
        self.eps.validate("eps")
    }
}

/// Structured IRLS with every iteration solved exactly.
///
/// Starts from `X⁰ = P_Ω(M)`, `W⁰ = I`, `w⁰ = 𝟙`. The first iterate with
/// identity weights reproduces `X⁰` whenever `α >= 0`, so convergence is only
/// tested from the second iteration on.
pub fn solve_structured_irls_exact(
    m_obs: &DenseMatrix,
    mask: &ObservationMask,
    cfg: &ExactIrlsConfig,
) -> Result<SolveResult> {
    check_problem(m_obs, mask)?;
    guard_size(mask)?;
    cfg.validate()?;
    let (m, _) = mask.shape();
    let mut x = project(m_obs, mask)?;
    let mut weight = DenseMatrix::identity(m);
    let mut w = vec![1.0; mask.missing_count()];
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_iter {
        let next = structured_irls_iteration(&x, mask, m_obs, &weight, &w, cfg.alpha)?;
        let distance = relative_distance(&next, &x);
        x = next;

        let gamma = cfg.gamma.at(k).max(cfg.gamma_min);
        let eps = cfg.eps.at(k).max(crate::sirls::REGULARIZER_FLOOR);
        weight = column_weight(&x, gamma, cfg.p)?;
        let z = gather_missing(&x, mask)?;
        let e = cfg.q / 2.0 - 1.0;
        w = z.values.iter().map(|v| (v * v + eps).powf(e)).collect();

        trace.push(IterationRecord {
            iteration: k,
            distance,
            rank: m.min(mask.cols()),
            surrogate: schatten_surrogate(&x, gamma, cfg.p),
            missing_l1: Some(z.l1_norm()),
        });
        if k > 1 && distance < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        iterations: trace.len(),
        x_hat: x,
        converged,
        trace,
    })
}

/// Errors of one weighted iteration with and without the sparsity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemarkOutcome {
    /// `‖M − X̂‖_F` with the penalty.
    pub err_structured: f64,
    /// `‖M − X̃‖_F` without it.
    pub err_plain: f64,
}

impl RemarkOutcome {
    pub fn holds(&self, slack: f64) -> bool {
        self.err_structured <= self.err_plain + slack
    }
}

/// Runs one iteration with the same weight `W` twice, with and without the
/// `α`-weighted penalty, on a matrix whose missing entries are exactly zero.
///
/// With uniform `w` the structured error never exceeds the plain one in
/// Frobenius norm; for general `w` the guarantee is in the `ℓ2(w)` norm.
pub fn remark_check(
    m: &DenseMatrix,
    mask: &ObservationMask,
    weight: &DenseMatrix,
    w: &[f64],
    alpha: f64,
) -> Result<RemarkOutcome> {
    if m.shape() != mask.shape() {
        return Err(Error::dims(mask.shape(), m.shape()));
    }
    if mask.missing_indices().iter().any(|&k| m.as_slice()[k] != 0.0) {
        return Err(Error::param("remark check needs every missing entry of M to be zero"));
    }
    let structured = structured_irls_iteration(m, mask, m, weight, w, alpha)?;
    let plain = structured_irls_iteration(m, mask, m, weight, w, 0.0)?;
    Ok(RemarkOutcome {
        err_structured: m.sub(&structured)?.frobenius_norm(),
        err_plain: m.sub(&plain)?.frobenius_norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyNorm {
    /// `α Σ |x_ij|` over Ω^c.
    #[default]
    L1,
    /// `α Σ x_ij²` over Ω^c.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnmConfig {
    pub alpha: f64,
    pub penalty: PenaltyNorm,
    /// ADMM penalty parameter.
    pub rho: f64,
    /// Relative tolerance on the primal and dual residuals.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NnmConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            penalty: PenaltyNorm::L1,
            rho: 1.0,
            tol: 1e-6,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NnmResult {
    /// Lowest-objective iterate; agrees with `M` on Ω exactly.
    pub x: DenseMatrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective seen after each iteration.
    pub best_objective_trace: Vec<f64>,
}

/// `‖X‖_* + α‖P_Ω^c(X)‖` for the chosen penalty.
pub fn nnm_objective(x: &DenseMatrix, mask: &ObservationMask, alpha: f64, penalty: PenaltyNorm) -> f64 {
    let nuclear: f64 = exact_svd(x).sigma.iter().sum();
    let missing = mask.missing_indices().iter().map(|&k| x.as_slice()[k]);
    let pen: f64 = match penalty {
        PenaltyNorm::L1 => missing.map(f64::abs).sum(),
        PenaltyNorm::L2 => missing.map(|v| v * v).sum(),
    };
    nuclear + alpha * pen
}

/// Singular value soft-thresholding.
fn shrink_singular_values(x: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    let mut f = exact_svd(x);
    f.sigma.iter_mut().for_each(|s| *s = (*s - tau).max(0.0));
    let keep = f.sigma.iter().take_while(|&&s| s > 0.0).count();
    if keep == 0 {
        return Ok(DenseMatrix::zeros(x.rows(), x.cols()));
    }
    Ok(f.truncate(keep).reconstruct())
}

/// Structured nuclear norm minimization by ADMM on the splitting `X = Y`:
/// `X` carries the nuclear norm (singular value thresholding at `1/ρ`) and
/// `Y` carries the penalty and the constraint (entrywise prox on Ω^c, reset
/// to `M` on Ω).
pub fn solve_structured_nnm(m_obs: &DenseMatrix, mask: &ObservationMask, cfg: &NnmConfig) -> Result<NnmResult> {
    check_problem(m_obs, mask)?;
    guard_size(mask)?;
    if !(cfg.alpha >= 0.0) || !(cfg.rho > 0.0) || !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::param("need alpha >= 0, rho > 0, tol > 0 and max_iter > 0"));
    }
    let (rows, cols) = mask.shape();
    let missing = mask.missing_indices();
    let flags = mask.flags();
    let shrink = cfg.alpha / cfg.rho;

    let mut y = project(m_obs, mask)?;
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut best = y.clone();
    let mut best_obj = nnm_objective(&y, mask, cfg.alpha, cfg.penalty);
    let mut best_trace = Vec::with_capacity(cfg.max_iter);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iter {
        iterations = it;
        let x = shrink_singular_values(&y.sub(&u)?, 1.0 / cfg.rho)?;
        let mut y_next = x.add(&u)?;
        {
            let data = y_next.as_mut_slice();
            for (k, &obs) in flags.iter().enumerate() {
                if obs {
                    data[k] = m_obs.as_slice()[k];
                }
            }
            for &k in missing {
                let v = data[k];
                data[k] = match cfg.penalty {
                    PenaltyNorm::L1 => v.signum() * (v.abs() - shrink).max(0.0),
                    PenaltyNorm::L2 => v / (1.0 + 2.0 * shrink),
                };
            }
        }
        let primal = x.sub(&y_next)?;
        let dual = y_next.sub(&y)?.frobenius_norm() * cfg.rho;
        for (ui, pi) in u.as_mut_slice().iter_mut().zip(primal.as_slice()) {
            *ui += pi;
        }
        y = y_next;

        let obj = nnm_objective(&y, mask, cfg.alpha, cfg.penalty);
        if obj < best_obj {
            best_obj = obj;
            best = y.clone();
        }
        best_trace.push(best_obj);

        let scale = x.frobenius_norm().max(y.frobenius_norm());
        let eps_primal = cfg.tol * (1.0 + scale);
        let eps_dual = cfg.tol * (1.0 + cfg.rho * u.frobenius_norm());
        if primal.frobenius_norm() <= eps_primal && dual <= eps_dual {
            converged = true;
            break;
        }
    }

    Ok(NnmResult {
        x: best,
        objective: best_obj,
        iterations,
        converged,
        best_objective_trace: best_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal};

    #[test]
    fn no_missing_entries_returns_observed() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let full = ObservationMask::full(2, 2);
        let out = structured_irls_iteration(&m, &full, &m, &DenseMatrix::identity(2), &[], 0.3).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn identity_weight_zeroes_missing_entries() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        let mask = ObservationMask::from_fn(3, 3, |i, j| i == j || j == 0);
        let w = vec![1.0; mask.missing_count()];
        let out = structured_irls_iteration(&m, &mask, &m, &DenseMatrix::identity(3), &w, 0.0).unwrap();
        assert_eq!(out, project(&m, &mask).unwrap());
    }

    #[test]
    fn iteration_validates_inputs() {
        let m = DenseMatrix::identity(2);
        let mask = ObservationMask::from_fn(2, 2, |i, j| i == j);
        let w = [1.0, 1.0];
        assert!(structured_irls_iteration(&m, &mask, &m, &DenseMatrix::identity(3), &w, 1.0).is_err());
        assert!(structured_irls_iteration(&m, &mask, &m, &DenseMatrix::identity(2), &w[..1], 1.0).is_err());
        assert!(structured_irls_iteration(&m, &mask, &m, &DenseMatrix::identity(2), &[1.0, 0.0], 1.0).is_err());
        assert!(structured_irls_iteration(&m, &mask, &m, &DenseMatrix::identity(2), &w, -1.0).is_err());
        let not_pd = DenseMatrix::from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(
            structured_irls_iteration(&m, &mask, &m, &not_pd, &w, 0.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn exact_solver_full_observation_and_guard() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let res = solve_structured_irls_exact(&m, &ObservationMask::full(2, 2), &ExactIrlsConfig::default()).unwrap();
        assert_eq!(res.x_hat, m);
        let big = DenseMatrix::zeros(101, 100);
        let mask = ObservationMask::full(101, 100);
        assert!(solve_structured_irls_exact(&big, &mask, &ExactIrlsConfig::default()).is_err());
        assert!(solve_structured_nnm(&big, &mask, &NnmConfig::default()).is_err());
    }

    #[test]
    fn plain_irls_completes_rank_one() {
        let u = [1.0, 0.5, -0.3, 0.8, 0.2];
        let v = [0.4, -1.0, 0.6, 0.9, 0.3];
        let m = DenseMatrix::from_fn(5, 5, |i, j| u[i] * v[j]);
        let mask = ObservationMask::from_fn(5, 5, |i, j| (i + 2 * j) % 5 != 0);
        let cfg = ExactIrlsConfig {
            alpha: 0.0,
            tol: 1e-9,
            ..ExactIrlsConfig::default()
        };
        let res = solve_structured_irls_exact(&m, &mask, &cfg).unwrap();
        let err = m.sub(&res.x_hat).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn remark_precondition_and_limits() {
        let m = DenseMatrix::from_rows(&[&[1.0, 0.0], &[2.0, 1.0]]);
        let mask = ObservationMask::from_fn(2, 2, |i, j| (i, j) != (0, 1));
        let w = [1.0];
        let r = remark_check(&m, &mask, &DenseMatrix::identity(2), &w, 1.0).unwrap();
        assert!(r.holds(1e-12));

        let bad = ObservationMask::from_fn(2, 2, |i, j| (i, j) != (1, 0));
        assert!(remark_check(&m, &bad, &DenseMatrix::identity(2), &w, 1.0).is_err());
    }

    #[test]
    fn remark_tiny_alpha_matches_plain() {
        let mut rng = rng_from_seed(3);
        let g = DenseMatrix::from_fn(6, 6, |_, _| standard_normal(&mut rng));
        let weight = column_weight(&g, 0.5, 1.0).unwrap();
        let m = DenseMatrix::from_fn(6, 6, |i, j| if (i + j) % 3 == 0 { 0.0 } else { (i + j) as f64 * 0.1 });
        let mask = ObservationMask::from_fn(6, 6, |i, j| m.get(i, j) != 0.0 || i == j);
        let w = vec![1.0; mask.missing_count()];
        let r = remark_check(&m, &mask, &weight, &w, 1e-12).unwrap();
        assert!((r.err_structured - r.err_plain).abs() < 1e-9);

        let r = remark_check(&m, &mask, &weight, &w, 1e6).unwrap();
        assert!(r.err_structured < 1e-4 * r.err_plain.max(1e-300) || r.err_structured < 1e-6);
    }

    fn two_by_two() -> (DenseMatrix, ObservationMask) {
        (
            DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]),
            ObservationMask::from_fn(2, 2, |i, j| (i, j) != (1, 1)),
        )
    }

    #[test]
    fn nnm_completes_rank_one_pattern() {
        let (m, mask) = two_by_two();
        let cfg = NnmConfig {
            alpha: 0.0,
            ..NnmConfig::default()
        };
        let res = solve_structured_nnm(&m, &mask, &cfg).unwrap();
        assert!((res.x.get(1, 1) - 1.0).abs() < 1e-3, "{}", res.x.get(1, 1));
        for (i, j) in mask.observed_pairs() {
            assert_eq!(res.x.get(i, j), 1.0);
        }
        assert!(res.best_objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nnm_large_penalty_zeroes_missing_entry() {
        let (m, mask) = two_by_two();
        let cfg = NnmConfig {
            alpha: 10.0,
            ..NnmConfig::default()
        };
        let res = solve_structured_nnm(&m, &mask, &cfg).unwrap();
        assert!(res.x.get(1, 1).abs() < 1e-3, "{}", res.x.get(1, 1));
    }

    #[test]
    fn nnm_full_observation() {
        let m = DenseMatrix::from_rows(&[&[0.5, -1.0], &[2.0, 0.0]]);
        let res = solve_structured_nnm(&m, &ObservationMask::full(2, 2), &NnmConfig::default()).unwrap();
        assert_eq!(res.x, m);
    }
}
