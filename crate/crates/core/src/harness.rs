//! Sampling-rate grid experiments: trial generation, solver dispatch,
//! per-cell aggregation, CSV tables and PGM heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{
    column_weight, remark_check, solve_structured_irls_exact, solve_structured_nnm, ExactIrlsConfig, NnmConfig,
    RemarkOutcome,
};
use crate::generators::{add_noise, gen_low_rank_sparse, normalize_spectral, GeneratorSpec, NoiseSpec};
use crate::linalg::DenseMatrix;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{project, structured_sample_with, ObservationMask, SamplingMode};
use crate::sirls::{solve_sirls, LowRankConfig};
use crate::structured::{solve_structured_sirls, StructuredConfig};

/// `‖X_ref − X‖_F / ‖X_ref‖_F`.
pub fn relative_error(reference: &DenseMatrix, x: &DenseMatrix) -> Result<f64> {
    let denom = reference.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::param("relative error against the zero matrix"));
    }
    Ok(reference.sub(x)?.frobenius_norm() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Sirls,
    StructuredSirls,
    StructuredNnm,
    IrlsExact,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Sirls,
        SolverKind::StructuredSirls,
        SolverKind::StructuredNnm,
        SolverKind::IrlsExact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Sirls => "sirls",
            SolverKind::StructuredSirls => "ssirls",
            SolverKind::StructuredNnm => "snnm",
            SolverKind::IrlsExact => "irls-exact",
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown solver '{s}' (expected sirls, ssirls, snnm or irls-exact)")))
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Configurations for every solver a grid may run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverSettings {
    pub sirls: LowRankConfig,
    pub structured: StructuredConfig,
    pub exact: ExactIrlsConfig,
    pub nnm: NnmConfig,
}

impl SolverSettings {
    /// Fixes the rank used by both gradient solvers.
    pub fn with_rank(mut self, rank: Option<usize>) -> Self {
        self.sirls.rank = rank;
        self.structured.lowrank.rank = rank;
        self
    }
}

/// Runs one solver and returns its completed matrix. `seed` feeds the
/// randomized SVD of the gradient solvers.
pub fn run_solver(
    kind: SolverKind,
    m_obs: &DenseMatrix,
    mask: &ObservationMask,
    settings: &SolverSettings,
    seed: u64,
) -> Result<DenseMatrix> {
    match kind {
        SolverKind::Sirls => {
            let cfg = LowRankConfig {
                seed,
                ..settings.sirls.clone()
            };
            Ok(solve_sirls(m_obs, mask, &cfg)?.x_hat)
        }
        SolverKind::StructuredSirls => {
            let mut cfg = settings.structured.clone();
            cfg.lowrank.seed = seed;
            Ok(solve_structured_sirls(m_obs, mask, &cfg)?.x_hat)
        }
        SolverKind::StructuredNnm => Ok(solve_structured_nnm(m_obs, mask, &settings.nnm)?.x),
        SolverKind::IrlsExact => Ok(solve_structured_irls_exact(m_obs, mask, &settings.exact)?.x_hat),
    }
}

/// `start, start + step, …` up to `stop` inclusive, rounded to ten decimals
/// so that decimal grids print cleanly.
pub fn rate_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start <= stop) {
        return Err(Error::param("rate range needs step > 0 and start <= stop"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// 0.10, 0.15, …, 1.00.
pub fn default_rates() -> Vec<f64> {
    rate_range(0.10, 1.00, 0.05).expect("valid default range")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub generator: GeneratorSpec,
    /// Observation rates of the zero entries (grid rows).
    pub rates_zero: Vec<f64>,
    /// Observation rates of the nonzero entries (grid columns).
    pub rates_nonzero: Vec<f64>,
    pub trials: usize,
    /// Relative noise level `ε`; the reference matrix becomes `B`.
    pub noise: Option<f64>,
    /// Solvers to run; the ratio compares the first against the second.
    pub solvers: Vec<SolverKind>,
    pub settings: SolverSettings,
    pub sampling: SamplingMode,
    pub base_seed: u64,
}

impl GridSpec {
    /// Square grid over `rates` with the default solver pair
    /// (Structured sIRLS against sIRLS).
    pub fn new(generator: GeneratorSpec, rates: Vec<f64>, trials: usize, base_seed: u64) -> Self {
        Self {
            generator,
            rates_zero: rates.clone(),
            rates_nonzero: rates,
            trials,
            noise: None,
            solvers: vec![SolverKind::StructuredSirls, SolverKind::Sirls],
            settings: SolverSettings::default(),
            sampling: SamplingMode::Bernoulli,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        for (name, rates) in [("rates_zero", &self.rates_zero), ("rates_nonzero", &self.rates_nonzero)] {
            if rates.is_empty() {
                return Err(Error::param(format!("{name} is empty")));
            }
            if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::param(format!("{name} must lie in [0, 1]")));
            }
            if rates.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!("{name} must be strictly increasing")));
            }
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be positive"));
        }
        if self.solvers.is_empty() {
            return Err(Error::param("at least one solver is required"));
        }
        if let Some(eps) = self.noise {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::param("noise level must be a finite nonnegative number"));
            }
        }
        Ok(())
    }
}

/// Outcome of one solver across the trials of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverCell {
    pub solver: SolverKind,
    /// Per-trial relative error; `None` marks a failed trial.
    pub errors: Vec<Option<f64>>,
    /// Mean over successful trials; NaN when every trial failed.
    pub mean_rel_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub rate_zero: f64,
    pub rate_nonzero: f64,
    pub solvers: Vec<SolverCell>,
    /// Mean over trials of `err(solvers[0]) / err(solvers[1])`; NaN with a
    /// single solver or when no trial had both solvers succeed.
    pub average_ratio: f64,
    /// `average_ratio < 1`.
    pub binned: bool,
    pub mean_fr: f64,
    pub trials: usize,
    /// Realized `|Ω|` per trial.
    pub observed: Vec<usize>,
}

struct TrialOutcome {
    observed: usize,
    errors: Vec<Option<f64>>,
}

/// Seed of trial `t` in cell `(i, j)`; generator, mask, noise and solver
/// streams are derived from it with the words 0, 1, 2, 3.
pub fn trial_seed(base: u64, i: usize, j: usize, t: usize) -> u64 {
    derive_seed(base, &[i as u64, j as u64, t as u64])
}

fn run_trial(spec: &GridSpec, rate_zero: f64, rate_nonzero: f64, seed: u64) -> TrialOutcome {
    let failed = |observed| TrialOutcome {
        observed,
        errors: vec![None; spec.solvers.len()],
    };
    let generator = GeneratorSpec {
        seed: derive_seed(seed, &[0]),
        ..spec.generator
    };
    let m = match gen_low_rank_sparse(&generator).and_then(|m| normalize_spectral(&m)) {
        Ok(m) => m,
        Err(_) => return failed(0),
    };
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let mask = match structured_sample_with(&m, rate_zero, rate_nonzero, 0.0, spec.sampling, &mut rng) {
        Ok(mask) => mask,
        Err(_) => return failed(0),
    };
    let observed = mask.observed_count();
    let reference = match spec.noise {
        Some(epsilon) => match add_noise(
            &m,
            &mask,
            &NoiseSpec {
                epsilon,
                seed: derive_seed(seed, &[2]),
            },
        ) {
            Ok(b) => b,
            Err(_) => return failed(observed),
        },
        None => m,
    };
    let solver_seed = derive_seed(seed, &[3]);
    let errors = spec
        .solvers
        .iter()
        .map(|&kind| {
            run_solver(kind, &reference, &mask, &spec.settings, solver_seed)
                .and_then(|x| relative_error(&reference, &x))
                .ok()
                .filter(|e| e.is_finite())
        })
        .collect();
    TrialOutcome { observed, errors }
}

fn trial_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Runs every (cell, trial) pair, in parallel, and aggregates per cell.
/// Cells are returned row-major: `rates_zero` outer, `rates_nonzero` inner.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let nz = spec.rates_nonzero.len();
    let jobs: Vec<(usize, usize, usize)> = (0..spec.rates_zero.len())
        .flat_map(|i| (0..nz).flat_map(move |j| (0..spec.trials).map(move |t| (i, j, t))))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(i, j, t)| {
            run_trial(
                spec,
                spec.rates_zero[i],
                spec.rates_nonzero[j],
                trial_seed(spec.base_seed, i, j, t),
            )
        })
        .collect();

    let (m, n, r) = (spec.generator.m, spec.generator.n, spec.generator.r);
    let dof = (r * (m + n - r)) as f64;
    let cells = outcomes
        .chunks(spec.trials)
        .enumerate()
        .map(|(cell, trials)| {
            let (i, j) = (cell / nz, cell % nz);
            let solvers: Vec<SolverCell> = spec
                .solvers
                .iter()
                .enumerate()
                .map(|(s, &solver)| {
                    let errors: Vec<Option<f64>> = trials.iter().map(|t| t.errors[s]).collect();
                    SolverCell {
                        solver,
                        mean_rel_error: mean(errors.iter().flatten().copied()),
                        failures: errors.iter().filter(|e| e.is_none()).count(),
                        errors,
                    }
                })
                .collect();
            let average_ratio = if solvers.len() >= 2 {
                mean(
                    trials
                        .iter()
                        .filter_map(|t| Some(trial_ratio(t.errors[0]?, t.errors[1]?))),
                )
            } else {
                f64::NAN
            };
            let observed: Vec<usize> = trials.iter().map(|t| t.observed).collect();
            let mean_observed = mean(observed.iter().map(|&o| o as f64));
            CellResult {
                rate_zero: spec.rates_zero[i],
                rate_nonzero: spec.rates_nonzero[j],
                solvers,
                average_ratio,
                binned: average_ratio < 1.0,
                mean_fr: dof / mean_observed,
                trials: spec.trials,
                observed,
            }
        })
        .collect();
    Ok(cells)
}

pub const CSV_HEADER: &str = "rate_zero,rate_nonzero,solver,mean_rel_error,average_ratio,binned,mean_FR,trials,failures";

/// One row per cell and solver; cell-level columns repeat across solvers.
pub fn format_csv(results: &[CellResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for cell in results {
        for s in &cell.solvers {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                cell.rate_zero,
                cell.rate_nonzero,
                s.solver,
                s.mean_rel_error,
                cell.average_ratio,
                u8::from(cell.binned),
                cell.mean_fr,
                cell.trials,
                s.failures
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn emit_csv(results: &[CellResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::param("no results to write"));
    }
    fs::write(path, format_csv(results))?;
    Ok(())
}

/// Quantity rendered by [`emit_heatmap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMetric {
    /// Mean relative error of the solver at this position in the solver list.
    MeanError(usize),
    AverageRatio,
    /// White where `average_ratio < 1`, black elsewhere.
    Binned,
}

impl HeatmapMetric {
    fn value(self, cell: &CellResult) -> f64 {
        match self {
            HeatmapMetric::MeanError(s) => cell.solvers.get(s).map_or(f64::NAN, |c| c.mean_rel_error),
            HeatmapMetric::AverageRatio => cell.average_ratio,
            HeatmapMetric::Binned => f64::from(u8::from(cell.binned)),
        }
    }

    fn label(self, results: &[CellResult]) -> String {
        match self {
            HeatmapMetric::MeanError(s) => {
                let name = results[0].solvers.get(s).map_or("?", |c| c.solver.name());
                format!("mean_rel_error[{name}]")
            }
            HeatmapMetric::AverageRatio => "average_ratio".into(),
            HeatmapMetric::Binned => "binned".into(),
        }
    }
}

/// Linear map of `[lo, hi]` onto `0..=255`, rounding half up and clamping.
/// Non-finite values map to 0.
pub fn gray_level(value: f64, lo: f64, hi: f64) -> u8 {
    if !value.is_finite() {
        return 0;
    }
    let t = if hi > lo { (value - lo) / (hi - lo) } else { 0.0 };
    (t * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Grid axes recovered from the row-major cell list.
fn axes(results: &[CellResult]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nonzero = Vec::new();
    for c in results {
        if c.rate_zero != results[0].rate_zero {
            break;
        }
        nonzero.push(c.rate_nonzero);
    }
    if results.len() % nonzero.len() != 0 {
        return Err(Error::param("results do not form a rectangular grid"));
    }
    let zero: Vec<f64> = results.iter().step_by(nonzero.len()).map(|c| c.rate_zero).collect();
    for (k, c) in results.iter().enumerate() {
        if c.rate_zero != zero[k / nonzero.len()] || c.rate_nonzero != nonzero[k % nonzero.len()] {
            return Err(Error::param("results do not form a rectangular grid"));
        }
    }
    Ok((zero, nonzero))
}

/// Binary PGM with one pixel per cell: `rate_zero` increases from the bottom
/// row upward, `rate_nonzero` from left to right. `range` defaults to
/// `[0, max]` for errors, `[0, 2]` for ratios and `[0, 1]` for the binned map.
/// A sidecar `<path>.txt` records the mapping.
pub fn emit_heatmap(
    results: &[CellResult],
    metric: HeatmapMetric,
    range: Option<(f64, f64)>,
    path: &Path,
) -> Result<()> {
    if results.is_empty() {
        return Err(Error::param("no results to render"));
    }
    let (zero, nonzero) = axes(results)?;
    let (lo, hi) = range.unwrap_or_else(|| match metric {
        HeatmapMetric::MeanError(_) => {
            let max = results
                .iter()
                .map(|c| metric.value(c))
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max);
            (0.0, if max > 0.0 { max } else { 1.0 })
        }
        HeatmapMetric::AverageRatio => (0.0, 2.0),
        HeatmapMetric::Binned => (0.0, 1.0),
    });
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param("heatmap range must satisfy lo < hi"));
    }

    let (h, w) = (zero.len(), nonzero.len());
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in (0..h).rev() {
        for c in &results[row * w..(row + 1) * w] {
            let v = metric.value(c);
            bytes.push(match metric {
                HeatmapMetric::Binned => {
                    if c.binned {
                        255
                    } else {
                        0
                    }
                }
                _ => gray_level(v, lo, hi),
            });
        }
    }
    fs::File::create(path)?.write_all(&bytes)?;

    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let mut sidecar = String::new();
    writeln!(sidecar, "metric = {}", metric.label(results)).unwrap();
    writeln!(sidecar, "width = {w}").unwrap();
    writeln!(sidecar, "height = {h}").unwrap();
    if metric == HeatmapMetric::Binned {
        writeln!(sidecar, "colormap = binary: 255 where average_ratio < 1, otherwise 0").unwrap();
    } else {
        writeln!(sidecar, "metric_min = {lo}").unwrap();
        writeln!(sidecar, "metric_max = {hi}").unwrap();
        writeln!(
            sidecar,
            "colormap = linear grayscale, pixel = floor(255 * (v - min) / (max - min) + 0.5) clamped to [0, 255], non-finite -> 0"
        )
        .unwrap();
    }
    writeln!(sidecar, "rows = rate_zero ascending bottom to top: {}", list(&zero)).unwrap();
    writeln!(sidecar, "columns = rate_nonzero ascending left to right: {}", list(&nonzero)).unwrap();
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".txt");
    fs::write(sidecar_path, sidecar)?;
    Ok(())
}

/// Writes `grid.csv` plus the error maps of the first two solvers, the ratio
/// map and the binned map into `dir`. Returns the written file names.
pub fn emit_grid_outputs(results: &[CellResult], dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = vec!["grid.csv".to_string()];
    emit_csv(results, &dir.join("grid.csv"))?;
    let solver_count = results.first().map_or(0, |c| c.solvers.len());
    for s in 0..solver_count.min(2) {
        let name = format!("error_{}.pgm", results[0].solvers[s].solver);
        emit_heatmap(results, HeatmapMetric::MeanError(s), None, &dir.join(&name))?;
        written.push(name);
    }
    if solver_count >= 2 {
        emit_heatmap(results, HeatmapMetric::AverageRatio, None, &dir.join("ratio.pgm"))?;
        emit_heatmap(results, HeatmapMetric::Binned, None, &dir.join("binned.pgm"))?;
        written.extend(["ratio.pgm".to_string(), "binned.pgm".to_string()]);
    }
    Ok(written)
}

/// Random instances for the one-iteration error inequality: generator
/// matrices whose zeros are observed at `rate_zero` and nonzeros at
/// `rate_nonzero`, with every unobserved entry then set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RemarkSuite {
    pub generator: GeneratorSpec,
    pub rate_zero: f64,
    pub rate_nonzero: f64,
    pub alpha: f64,
    /// Exponent of the shared weight `(XXᵀ + γI)^{p/2−1}`, built from the
    /// observed matrix with `γ = 1/2`.
    pub p: f64,
    pub trials: usize,
    pub sampling: SamplingMode,
    pub base_seed: u64,
}

impl RemarkSuite {
    pub fn new(trials: usize, base_seed: u64) -> Self {
        Self {
            generator: GeneratorSpec::new(10, 10, 2, 0),
            rate_zero: 0.5,
            rate_nonzero: 1.0,
            alpha: 1.0,
            p: 1.0,
            trials,
            sampling: SamplingMode::Bernoulli,
            base_seed,
        }
    }
}

/// Runs the suite; trial `t` is seeded with `derive_seed(base_seed, [t])`.
pub fn run_remark_suite(suite: &RemarkSuite) -> Result<Vec<RemarkOutcome>> {
    if suite.trials == 0 {
        return Err(Error::param("trials must be positive"));
    }
    (0..suite.trials)
        .map(|t| {
            let seed = derive_seed(suite.base_seed, &[t as u64]);
            let spec = GeneratorSpec {
                seed: derive_seed(seed, &[0]),
                ..suite.generator
            };
            let m = gen_low_rank_sparse(&spec)?;
            let m = if m.is_zero() { m } else { normalize_spectral(&m)? };
            let mut rng = rng_from_seed(derive_seed(seed, &[1]));
            let mask = structured_sample_with(&m, suite.rate_zero, suite.rate_nonzero, 0.0, suite.sampling, &mut rng)?;
            let m = project(&m, &mask)?;
            let weight = column_weight(&m, 0.5, suite.p)?;
            let w = vec![1.0; mask.missing_count()];
            remark_check(&m, &mask, &weight, &w, suite.alpha)
        })
        .collect()
}
