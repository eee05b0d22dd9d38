//! Structured sIRLS: low-rank completion that also pulls the missing entries
//! toward zero.
//!
//! Every outer iteration `k` runs
//!
//! 1. `k_s` reweighted sparsity steps on the missing entries,
//!    `z ← z − c^k (w ⊙ z)` with the weights `w` of the previous iteration;
//! 2. a low-rank weight refresh from the current iterate followed by `k_l`
//!    projected gradient steps (see [`crate::sirls`]);
//! 3. a sparsity weight refresh `w = (z² + ε^k)^{q/2−1}`.
//!
//! The gradient of `Σ w_i z_i²` is `2 w ⊙ z`; the factor 2 is absorbed into
//! `c^k`. Observed entries are never modified.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::sampling::{gather_missing, project, MissingVector, ObservationMask};
use crate::sirls::{
    check_problem, relative_distance, Decay, IterationRecord, LowRankConfig, LowRankStepper, SolveResult,
    REGULARIZER_FLOOR,
};

/// Rule producing `ε^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsRule {
    Decay(Decay),
    /// `ε^k = min(ε^{k−1}, z_(s+1)²)` where `z_(s+1)` is the `(s+1)`-th
    /// largest missing entry in magnitude and `s` the expected sparsity.
    NextLargestMissing { first: f64, sparsity: usize },
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::Decay(Decay::Geometric { first: 0.9, ratio: 0.9 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredConfig {
    /// Low-rank parameters; `lowrank.steps_per_refresh` is ignored in favour
    /// of `lowrank_steps`.
    pub lowrank: LowRankConfig,
    /// Sparsity exponent in `[0, 1]`.
    pub q: f64,
    /// `k_s`: sparsity steps per outer iteration.
    pub sparsity_steps: usize,
    /// `k_l`: low-rank steps per outer iteration.
    pub lowrank_steps: usize,
    /// Sparsity step size `c^k`.
    pub c: Decay,
    pub eps: EpsRule,
    /// Clamp missing entries of the output at zero from below.
    pub nonneg: bool,
    /// Target value of the missing entries; the problem is solved for
    /// `M − shift` and the shift added back.
    pub shift: f64,
}

impl Default for StructuredConfig {
    fn default() -> Self {
        Self {
            lowrank: LowRankConfig {
                max_iter: 1000,
                ..LowRankConfig::default()
            },
            q: 1.0,
            sparsity_steps: 1,
            lowrank_steps: 10,
            c: Decay::Constant(1e-6),
            eps: EpsRule::default(),
            nonneg: false,
            shift: 0.0,
        }
    }
}

impl StructuredConfig {
    pub fn validate(&self) -> Result<()> {
        self.lowrank.validate()?;
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::param(format!("q = {} outside [0, 1]", self.q)));
        }
        if self.lowrank_steps == 0 {
            return Err(Error::param("lowrank_steps (k_l) must be at least 1"));
        }
        if !self.shift.is_finite() {
            return Err(Error::param("shift must be finite"));
        }
        self.c.validate("c")?;
        match self.eps {
            EpsRule::Decay(d) => d.validate("eps"),
            EpsRule::NextLargestMissing { first, .. } if first > 0.0 => Ok(()),
            EpsRule::NextLargestMissing { .. } => Err(Error::param("initial eps must be positive")),
        }
    }
}

/// `(z_i² + ε)^{q/2−1}` elementwise.
pub fn sparsity_weights(z: &MissingVector, eps: f64, q: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps = {eps} must be positive")));
    }
    Ok(weights(&z.values, eps, q))
}

fn weights(z: &[f64], eps: f64, q: f64) -> Vec<f64> {
    let e = q / 2.0 - 1.0;
    z.iter().map(|v| (v * v + eps).powf(e)).collect()
}

/// `z − c·(w ⊙ z)`.
pub fn sparsity_step(z: &MissingVector, w: &[f64], c: f64) -> Result<MissingVector> {
    if w.len() != z.len() {
        return Err(Error::param(format!(
            "weight length {} does not match missing vector length {}",
            w.len(),
            z.len()
        )));
    }
    if !(c >= 0.0) {
        return Err(Error::param("step size c must be nonnegative"));
    }
    z.with_values(z.values.iter().zip(w).map(|(v, wi)| v - c * wi * v).collect())
}

/// `max(z_i, 0)` elementwise.
pub fn nonneg_threshold(z: &MissingVector) -> MissingVector {
    z.with_values(z.values.iter().map(|v| v.max(0.0)).collect())
        .expect("same length")
}

fn next_eps(rule: &EpsRule, k: usize, prev: f64, z: &[f64]) -> f64 {
    let eps = match *rule {
        EpsRule::Decay(d) => d.at(k),
        EpsRule::NextLargestMissing { sparsity, .. } => {
            let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
            let next = if sparsity < mags.len() {
                let (_, nth, _) = mags.select_nth_unstable_by(sparsity, |a, b| b.total_cmp(a));
                *nth
            } else {
                0.0
            };
            prev.min(next * next)
        }
    };
    eps.max(REGULARIZER_FLOOR)
}

pub fn solve_structured_sirls(
    m_obs: &DenseMatrix,
    mask: &ObservationMask,
    cfg: &StructuredConfig,
) -> Result<SolveResult> {
    check_problem(m_obs, mask)?;
    cfg.validate()?;

    let shifted;
    let target = if cfg.shift != 0.0 {
        shifted = m_obs.map(|v| v - cfg.shift);
        &shifted
    } else {
        m_obs
    };

    let mut x = project(target, mask)?;
    let missing = mask.missing_indices();
    let mut w = vec![1.0; missing.len()];
    let mut eps_prev = match cfg.eps {
        EpsRule::Decay(d) => d.at(1),
        EpsRule::NextLargestMissing { first, .. } => first,
    };
    let mut stepper = LowRankStepper::new(&cfg.lowrank);
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.lowrank.max_iter {
        let prev = x.clone();

        let c = cfg.c.at(k);
        {
            let data = x.as_mut_slice();
            for _ in 0..cfg.sparsity_steps {
                for (&idx, &wi) in missing.iter().zip(&w) {
                    data[idx] -= c * wi * data[idx];
                }
            }
        }

        let block = stepper.block(&mut x, mask, k, cfg.lowrank_steps)?;

        let z: Vec<f64> = missing.iter().map(|&idx| x.as_slice()[idx]).collect();
        let eps = next_eps(&cfg.eps, k, eps_prev, &z);
        eps_prev = eps;
        w = weights(&z, eps, cfg.q);

        let distance = relative_distance(&x, &prev);
        trace.push(IterationRecord {
            iteration: k,
            distance,
            rank: block.rank,
            surrogate: block.surrogate,
            missing_l1: Some(z.iter().map(|v| v.abs()).sum()),
        });
        if distance < cfg.lowrank.tol {
            converged = true;
            break;
        }
    }

    if cfg.nonneg {
        let z = nonneg_threshold(&gather_missing(&x, mask)?);
        crate::sampling::scatter_missing_into(&z, &mut x)?;
    }
    if cfg.shift != 0.0 {
        x = x.map(|v| v + cfg.shift);
        for (i, j) in mask.observed_pairs() {
            x.set(i, j, m_obs.get(i, j));
        }
    }

    Ok(SolveResult {
        iterations: trace.len(),
        x_hat: x,
        converged,
        trace,
    })
}
