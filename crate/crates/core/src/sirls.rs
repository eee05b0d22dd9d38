//! Gradient projection on the smooth Schatten-p surrogate (sIRLS-p).
//!
//! Each outer iteration refreshes the low-rank weight
//! `W = (XᵀX + γI)^{p/2−1}` from a rank-`r` truncated SVD of the current
//! iterate and takes gradient steps `X ← P_Ω^c(X − s·X·W) + P_Ω(M)`.
//!
//! `X·W` is the gradient of `Tr(XᵀX + γI)^{p/2}` up to the constant factor
//! `p`, which is absorbed into the step size `s`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{exact_svd, truncated_svd, DenseMatrix, SvdFactors, SvdOptions};
use crate::rng::{rng_from_seed, SolverRng};
use crate::sampling::{project, ObservationMask};

/// Regularizers are clamped here so that `γ^{p/2−1}` stays representable.
pub const REGULARIZER_FLOOR: f64 = 1e-300;

/// Singular values above this fraction of `σ_1` count toward the rank estimate.
pub const RANK_THRESHOLD: f64 = 1e-2;

/// Value of a per-iteration parameter at outer iteration `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `first · ratio^(k−1)`.
    Geometric { first: f64, ratio: f64 },
    Constant(f64),
}

impl Decay {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            Decay::Geometric { first, ratio } => first * ratio.powi(k as i32 - 1),
            Decay::Constant(v) => v,
        }
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Decay::Geometric { first, ratio } => first > 0.0 && ratio > 0.0 && ratio <= 1.0,
            Decay::Constant(v) => v > 0.0 && v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("{name} schedule {self:?} must be positive and nonincreasing")))
        }
    }
}

/// Rule producing `γ^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    Decay(Decay),
    /// `γ^k = min(γ^{k−1}, σ_{r+1}(X^k)²)` starting from `first`.
    NextSingularValue { first: f64 },
}

impl Default for GammaRule {
    fn default() -> Self {
        GammaRule::Decay(Decay::Geometric { first: 0.5, ratio: 0.5 })
    }
}

/// Rule producing the low-rank step size `s^k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepRule {
    /// `s^k = (γ^k)^{1−p/2}`.
    #[default]
    GammaPower,
    Decay(Decay),
}

/// Parameters shared by both gradient-projection solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankConfig {
    /// Schatten exponent in `[0, 1]`.
    pub p: f64,
    pub gamma: GammaRule,
    pub step: StepRule,
    /// Stop once `d(X^k, X^{k−1}) < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Known rank; `None` re-estimates the rank every iteration.
    pub rank: Option<usize>,
    /// Gradient steps per weight refresh.
    pub steps_per_refresh: usize,
    pub svd: SvdOptions,
    /// Seeds the randomized SVD.
    pub seed: u64,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            gamma: GammaRule::default(),
            step: StepRule::default(),
            tol: 1e-5,
            max_iter: 5000,
            rank: None,
            steps_per_refresh: 1,
            svd: SvdOptions::default(),
            seed: 0,
        }
    }
}

impl LowRankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param(format!("p = {} outside [0, 1]", self.p)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be positive"));
        }
        if self.rank == Some(0) {
            return Err(Error::param("rank must be positive"));
        }
        match self.gamma {
            GammaRule::Decay(d) => d.validate("gamma")?,
            GammaRule::NextSingularValue { first } if !(first > 0.0) => {
                return Err(Error::param("initial gamma must be positive"))
            }
            GammaRule::NextSingularValue { .. } => {}
        }
        if let StepRule::Decay(d) = self.step {
            d.validate("step")?;
        }
        Ok(())
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖X^k − X^{k−1}‖_F / ‖X^k‖_F`.
    pub distance: f64,
    pub rank: usize,
    /// Schatten surrogate of the iterate the weights were built from,
    /// with the singular values beyond the truncation rank taken as zero.
    pub surrogate: f64,
    /// `‖z(X^k)‖_1`; only recorded by the structured solver.
    pub missing_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_hat: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn distance_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.distance).collect()
    }

    pub fn rank_trace(&self) -> Vec<usize> {
        self.trace.iter().map(|r| r.rank).collect()
    }

    /// CSV with columns `iteration,distance,rank_estimate,surrogate_value`
    /// and, when recorded, `missing_l1`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let with_l1 = self.trace.iter().any(|r| r.missing_l1.is_some());
        write!(w, "iteration,distance,rank_estimate,surrogate_value")?;
        writeln!(w, "{}", if with_l1 { ",missing_l1" } else { "" })?;
        for r in &self.trace {
            write!(w, "{},{:e},{},{:e}", r.iteration, r.distance, r.rank, r.surrogate)?;
            match r.missing_l1 {
                Some(l1) => writeln!(w, ",{l1:e}")?,
                None if with_l1 => writeln!(w, ",")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }
}

/// The weight `V·diag(d)·Vᵀ + c·(I − VVᵀ)` kept in factored form.
///
/// `d_i = (σ_i² + γ)^{p/2−1}` on the leading right singular vectors and
/// `c = γ^{p/2−1}` on their orthogonal complement.
#[derive(Debug, Clone)]
pub struct WeightOperator {
    v: DenseMatrix,
    sigma: Vec<f64>,
    gamma: f64,
    p: f64,
}

impl WeightOperator {
    pub fn from_factors(factors: &SvdFactors, gamma: f64, p: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::param(format!("gamma = {gamma} must be positive")));
        }
        Ok(Self {
            v: factors.v.clone(),
            sigma: factors.sigma.clone(),
            gamma,
            p,
        })
    }

    fn exponent(&self) -> f64 {
        self.p / 2.0 - 1.0
    }

    /// Eigenvalue on the complement of the retained subspace.
    pub fn complement_value(&self) -> f64 {
        self.gamma.powf(self.exponent())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .map(|s| (s * s + self.gamma).powf(self.exponent()))
            .collect()
    }

    /// `scale · X · W`, with the scalar folded into the eigenvalues in log
    /// space so tiny `γ` does not overflow the intermediate weights.
    pub fn apply_scaled(&self, x: &DenseMatrix, scale: f64) -> Result<DenseMatrix> {
        let e = self.exponent();
        let log_s = scale.ln();
        let c = (log_s + e * self.gamma.ln()).exp();
        let mut out = x.scale(c);
        if self.sigma.is_empty() {
            return Ok(out);
        }
        let mut xv = x.matmul(&self.v)?;
        let coef: Vec<f64> = self
            .sigma
            .iter()
            .map(|s| (log_s + e * (s * s + self.gamma).ln()).exp() - c)
            .collect();
        for i in 0..xv.rows() {
            for (j, cj) in coef.iter().enumerate() {
                let v = xv.get(i, j) * cj;
                xv.set(i, j, v);
            }
        }
        let low_rank = xv.matmul_t(&self.v)?;
        for (o, l) in out.as_mut_slice().iter_mut().zip(low_rank.as_slice()) {
            *o += l;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.v.rows();
        let c = self.complement_value();
        let mut w = DenseMatrix::identity(n).scale(c);
        for (k, d) in self.eigenvalues().into_iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let v = w.get(i, j) + (d - c) * self.v.get(i, k) * self.v.get(j, k);
                    w.set(i, j, v);
                }
            }
        }
        w
    }
}

/// `(XᵀX + γI)^{p/2−1}` as a dense `n × n` matrix, built from the leading `r`
/// singular triples of `X` (exact SVD) with the remaining eigenvalues set to
/// `γ^{p/2−1}`.
pub fn weight_matrix(x: &DenseMatrix, gamma: f64, p: f64, r: usize) -> Result<DenseMatrix> {
    let k = x.rows().min(x.cols());
    if r > k {
        return Err(Error::param(format!("rank {r} exceeds min dimension {k}")));
    }
    let factors = exact_svd(x).truncate(r);
    Ok(WeightOperator::from_factors(&factors, gamma, p)?.to_dense())
}

/// `Σ_i (σ_i² + γ)^{p/2}` over all `n` singular values of `X` (zeros
/// included), or `Σ_i log(σ_i² + γ)` when `p = 0`.
pub fn schatten_surrogate(x: &DenseMatrix, gamma: f64, p: f64) -> f64 {
    let sigma = exact_svd(x).sigma;
    surrogate_from_spectrum(&sigma, x.cols(), gamma, p)
}

fn surrogate_from_spectrum(sigma: &[f64], n: usize, gamma: f64, p: f64) -> f64 {
    let term = |s2: f64| {
        if p == 0.0 {
            (s2 + gamma).ln()
        } else {
            (s2 + gamma).powf(p / 2.0)
        }
    };
    let tail = n.saturating_sub(sigma.len()) as f64;
    sigma.iter().map(|s| term(s * s)).sum::<f64>() + tail * term(0.0)
}

/// Number of singular values above `RANK_THRESHOLD · σ_1`.
pub fn rank_from_spectrum(sigma: &[f64]) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > 0.0 => sigma.iter().take_while(|&&s| s > RANK_THRESHOLD * s1).count(),
        _ => 0,
    }
}

/// `⌈n(1 − √(1 − |Ω|/mn))⌉`, clamped to `1..=min(m, n)`.
pub fn max_rank(m: usize, n: usize, observed: usize) -> usize {
    let frac = observed as f64 / (m * n) as f64;
    let r = (n as f64 * (1.0 - (1.0 - frac).max(0.0).sqrt())).ceil() as usize;
    r.clamp(1, m.min(n).max(1))
}

/// The rank used to truncate the SVD: `rank_input` when given, otherwise
/// `min(r_max, r̂)` from the spectrum of `X`. A zero matrix yields 1.
pub fn estimate_rank(x: &DenseMatrix, mask: &ObservationMask, rank_input: Option<usize>) -> usize {
    if let Some(r) = rank_input {
        return r;
    }
    let sigma = exact_svd(x).sigma;
    let r_hat = rank_from_spectrum(&sigma);
    let r_max = max_rank(x.rows(), x.cols(), mask.observed_count());
    r_hat.min(r_max).max(1)
}

/// `d(X, X_prev) = ‖X − X_prev‖_F / ‖X‖_F`; zero when the two are equal.
pub fn relative_distance(x: &DenseMatrix, prev: &DenseMatrix) -> f64 {
    let diff = x
        .as_slice()
        .iter()
        .zip(prev.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / x.frobenius_norm()
    }
}

pub(crate) fn check_problem(m_obs: &DenseMatrix, mask: &ObservationMask) -> Result<()> {
    if m_obs.shape() != mask.shape() {
        return Err(Error::dims(mask.shape(), m_obs.shape()));
    }
    if mask.is_empty() {
        return Err(Error::param("observation mask is empty"));
    }
    Ok(())
}

pub(crate) fn gradient_step_in_place(
    x: &mut DenseMatrix,
    mask: &ObservationMask,
    weight: &WeightOperator,
    s: f64,
) -> Result<()> {
    if s == 0.0 || mask.is_full() {
        return Ok(());
    }
    let grad = weight.apply_scaled(x, s)?;
    let data = x.as_mut_slice();
    for &k in mask.missing_indices() {
        data[k] -= grad.as_slice()[k];
    }
    Ok(())
}

/// One projected gradient step with the weight built from `X` itself:
/// `P_Ω^c(X − s·X·W) + P_Ω(M_obs)`.
pub fn lowrank_step(
    x: &DenseMatrix,
    mask: &ObservationMask,
    m_obs: &DenseMatrix,
    gamma: f64,
    s: f64,
    p: f64,
    r: usize,
) -> Result<DenseMatrix> {
    if x.shape() != mask.shape() || m_obs.shape() != mask.shape() {
        return Err(Error::dims(mask.shape(), x.shape()));
    }
    let k = x.rows().min(x.cols());
    if r > k {
        return Err(Error::param(format!("rank {r} exceeds min dimension {k}")));
    }
    let weight = WeightOperator::from_factors(&exact_svd(x).truncate(r), gamma, p)?;
    let mut out = x.clone();
    gradient_step_in_place(&mut out, mask, &weight, s)?;
    for (i, j) in mask.observed_pairs() {
        out.set(i, j, m_obs.get(i, j));
    }
    Ok(out)
}

/// Runs the low-rank half of an outer iteration: SVD, rank choice, weight
/// refresh and a block of gradient steps. Shared by both solvers so that
/// identical configurations consume the random stream identically.
pub(crate) struct LowRankStepper<'a> {
    cfg: &'a LowRankConfig,
    rng: SolverRng,
    gamma_prev: f64,
}

pub(crate) struct BlockOutcome {
    pub rank: usize,
    pub surrogate: f64,
}

impl<'a> LowRankStepper<'a> {
    pub fn new(cfg: &'a LowRankConfig) -> Self {
        let gamma_prev = match cfg.gamma {
            GammaRule::Decay(d) => d.at(1),
            GammaRule::NextSingularValue { first } => first,
        };
        Self {
            cfg,
            rng: rng_from_seed(cfg.seed),
            gamma_prev,
        }
    }

    pub fn block(
        &mut self,
        x: &mut DenseMatrix,
        mask: &ObservationMask,
        k: usize,
        steps: usize,
    ) -> Result<BlockOutcome> {
        let (m, n) = x.shape();
        let k_max = m.min(n);
        let wants_next = matches!(self.cfg.gamma, GammaRule::NextSingularValue { .. });

        let (factors, rank) = match self.cfg.rank {
            Some(r) => {
                let r = r.min(k_max);
                let extra = usize::from(wants_next && r < k_max);
                (truncated_svd(x, r + extra, &self.cfg.svd, &mut self.rng)?, r)
            }
            None => {
                let r_max = max_rank(m, n, mask.observed_count());
                let f = truncated_svd(x, r_max, &self.cfg.svd, &mut self.rng)?;
                let r = rank_from_spectrum(&f.sigma).min(r_max).max(1);
                (f, r)
            }
        };

        let gamma = match self.cfg.gamma {
            GammaRule::Decay(d) => d.at(k),
            GammaRule::NextSingularValue { .. } => {
                let next = factors.sigma.get(rank).copied().unwrap_or(0.0);
                self.gamma_prev.min(next * next)
            }
        }
        .max(REGULARIZER_FLOOR);
        self.gamma_prev = gamma;

        let p = self.cfg.p;
        let step = match self.cfg.step {
            StepRule::GammaPower => gamma.powf(1.0 - p / 2.0),
            StepRule::Decay(d) => d.at(k),
        };

        let factors = factors.truncate(rank);
        let surrogate = surrogate_from_spectrum(&factors.sigma, n, gamma, p);
        let weight = WeightOperator::from_factors(&factors, gamma, p)?;
        for _ in 0..steps {
            gradient_step_in_place(x, mask, &weight, step)?;
        }
        Ok(BlockOutcome { rank, surrogate })
    }
}

/// Baseline sIRLS: starts from `P_Ω(M_obs)` and alternates weight refreshes
/// with `cfg.steps_per_refresh` gradient steps until the relative change of
/// consecutive outer iterates drops below `cfg.tol`.
pub fn solve_sirls(m_obs: &DenseMatrix, mask: &ObservationMask, cfg: &LowRankConfig) -> Result<SolveResult> {
    check_problem(m_obs, mask)?;
    cfg.validate()?;
    let mut x = project(m_obs, mask)?;
    let mut stepper = LowRankStepper::new(cfg);
    let mut trace = Vec::new();
    let mut converged = false;
    for k in 1..=cfg.max_iter {
        let prev = x.clone();
        let out = stepper.block(&mut x, mask, k, cfg.steps_per_refresh)?;
        let distance = relative_distance(&x, &prev);
        trace.push(IterationRecord {
            iteration: k,
            distance,
            rank: out.rank,
            surrogate: out.surrogate,
            missing_l1: None,
        });
        if distance < cfg.tol {
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
