//! Command-line front end of the `smc` binary.
//!
//! Every long flag can also be set from a `key = value` file passed with
//! `--config`; flags given on the command line take precedence.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::exact::{solve_structured_irls_exact, solve_structured_nnm};
use crate::generators::{add_noise, gen_low_rank_sparse, normalize_spectral, GeneratorSpec, NoiseSpec};
use crate::harness::{
    emit_grid_outputs, rate_range, relative_error, run_grid, run_remark_suite, CellResult, GridSpec, RemarkSuite,
    SolverKind, SolverSettings,
};
use crate::linalg::{read_dense, write_dense, DenseMatrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{structured_sample_with, ObservationMask, SamplingMode};
use crate::sirls::{solve_sirls, SolveResult};
use crate::structured::solve_structured_sirls;

#[derive(Parser, Debug)]
#[command(name = "smc", version, about = "Sparse low-rank matrix completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a normalized sparse low-rank matrix and an observation mask.
    Generate(Opts),
    /// Complete one matrix with one solver.
    Solve(Opts),
    /// Run a sampling-rate grid and write CSV + PGM heatmaps.
    Grid(Opts),
    /// Grid comparing Structured sIRLS with the exact small-scale solvers.
    Compare(Opts),
    /// Check the one-iteration error inequality on random instances.
    Remark(Opts),
}

#[derive(Args, Debug, Clone, Default)]
struct Opts {
    /// Matrix dimensions.
    #[arg(long, num_args = 2, value_names = ["M", "N"])]
    size: Option<Vec<usize>>,
    /// Rank of the generated matrix (also given to the solvers unless --rank-unknown).
    #[arg(long)]
    rank: Option<usize>,
    /// Let the gradient solvers estimate the rank every iteration.
    #[arg(long)]
    rank_unknown: bool,
    /// Rates for both grid axes.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "STEP"])]
    rates: Option<Vec<f64>>,
    /// Rates of the zero entries (grid rows); overrides --rates.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "STEP"])]
    rates_zero: Option<Vec<f64>>,
    /// Rates of the nonzero entries (grid columns); overrides --rates.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "STEP"])]
    rates_nonzero: Option<Vec<f64>>,
    /// Observation rate of zero entries for generate/solve/remark.
    #[arg(long)]
    rate_zero: Option<f64>,
    /// Observation rate of nonzero entries for generate/solve/remark.
    #[arg(long)]
    rate_nonzero: Option<f64>,
    /// Observe exactly round(rate * class size) entries per class.
    #[arg(long)]
    exact_count: bool,
    #[arg(long)]
    trials: Option<usize>,
    /// Relative noise level on the observed entries.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Solver; repeat to choose the grid's solver list (ratio = first / second).
    #[arg(long, value_parser = parse_solver)]
    solver: Vec<SolverKind>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Sparsity penalty weight of the exact solvers.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sparsity steps per outer iteration.
    #[arg(long)]
    ks: Option<usize>,
    /// Low-rank steps per outer iteration.
    #[arg(long)]
    kl: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Clamp missing entries of the Structured sIRLS output at zero.
    #[arg(long)]
    nonneg: bool,
    /// Matrix file ("rows cols" header, whitespace-separated rows) for solve.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Mask CSV for solve; defaults to full observation with --matrix.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value file mirroring the long flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

const BOOLEAN_KEYS: [&str; 3] = ["rank-unknown", "exact-count", "nonneg"];

/// Appends the settings of the `--config` file for every key not already
/// present on the command line.
fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Error::param("--config needs a file path"))?,
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::param(format!("cannot read config file {path}: {e}")))?;
    let present: Vec<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();

    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected key = value".into(),
        })?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(Error::Parse {
                line: n + 1,
                message: "config files cannot include other config files".into(),
            });
        }
        if present.contains(&key.as_str()) {
            continue;
        }
        let value = value.trim();
        if BOOLEAN_KEYS.contains(&key.as_str()) {
            match value {
                "true" | "yes" | "1" => extra.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => {
                    return Err(Error::Parse {
                        line: n + 1,
                        message: format!("{key} expects true or false"),
                    })
                }
            }
            continue;
        }
        if key == "solver" {
            for s in value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()) {
                extra.push("--solver".into());
                extra.push(s.into());
            }
            continue;
        }
        extra.push(format!("--{key}"));
        extra.extend(value.split_whitespace().map(String::from));
    }
    let mut merged = args;
    merged.extend(extra);
    Ok(merged)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for invalid parameters or usage,
/// 2 for runtime failures.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    run_with_output(argv, &mut std::io::stdout().lock())
}

/// [`run`] with the report written to `out` instead of standard output.
pub fn run_with_output<I, S>(argv: I, out: &mut impl Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Generate(o) => generate(&o, out),
        Command::Solve(o) => solve(&o, out),
        Command::Grid(o) => grid(&o, false, out),
        Command::Compare(o) => grid(&o, true, out),
        Command::Remark(o) => remark(&o, out),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_parameter_error() {
                1
            } else {
                2
            }
        }
    }
}

struct Defaults {
    size: (usize, usize),
    rank: usize,
    trials: usize,
}

impl Opts {
    fn size(&self, d: &Defaults) -> (usize, usize) {
        self.size.as_ref().map_or(d.size, |s| (s[0], s[1]))
    }

    fn generator(&self, d: &Defaults) -> GeneratorSpec {
        let (m, n) = self.size(d);
        GeneratorSpec::new(m, n, self.rank.unwrap_or(d.rank), self.seed.unwrap_or(0))
    }

    fn sampling(&self) -> SamplingMode {
        if self.exact_count {
            SamplingMode::ExactCount
        } else {
            SamplingMode::Bernoulli
        }
    }

    fn settings(&self, rank: usize) -> SolverSettings {
        let mut s = SolverSettings::default().with_rank((!self.rank_unknown).then_some(rank));
        if let Some(p) = self.p {
            s.sirls.p = p;
            s.structured.lowrank.p = p;
            s.exact.p = p;
        }
        if let Some(q) = self.q {
            s.structured.q = q;
            s.exact.q = q;
        }
        if let Some(alpha) = self.alpha {
            s.exact.alpha = alpha;
            s.nnm.alpha = alpha;
        }
        if let Some(ks) = self.ks {
            s.structured.sparsity_steps = ks;
        }
        if let Some(kl) = self.kl {
            s.structured.lowrank_steps = kl;
        }
        if let Some(tol) = self.tol {
            s.sirls.tol = tol;
            s.structured.lowrank.tol = tol;
            s.exact.tol = tol;
        }
        if let Some(it) = self.max_iter {
            s.sirls.max_iter = it;
            s.structured.lowrank.max_iter = it;
            s.exact.max_iter = it;
            s.nnm.max_iter = it;
        }
        s.structured.nonneg = self.nonneg;
        s
    }

    fn axis(&self, specific: &Option<Vec<f64>>) -> Result<Vec<f64>> {
        match specific.as_ref().or(self.rates.as_ref()) {
            Some(r) => rate_range(r[0], r[1], r[2]),
            None => Ok(crate::harness::default_rates()),
        }
    }
}

/// Normalized generator matrix, its mask and the (possibly noisy) matrix the
/// solvers see.
fn synthesize(o: &Opts, d: &Defaults) -> Result<(DenseMatrix, ObservationMask, DenseMatrix)> {
    let spec = o.generator(d);
    let m = normalize_spectral(&gen_low_rank_sparse(&spec)?)?;
    let seed = o.seed.unwrap_or(0);
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let mask = structured_sample_with(
        &m,
        o.rate_zero.unwrap_or(1.0),
        o.rate_nonzero.unwrap_or(1.0),
        0.0,
        o.sampling(),
        &mut rng,
    )?;
    let b = match o.noise {
        Some(epsilon) => add_noise(
            &m,
            &mask,
            &NoiseSpec {
                epsilon,
                seed: derive_seed(seed, &[2]),
            },
        )?,
        None => m.clone(),
    };
    Ok((m, mask, b))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn generate(o: &Opts, out: &mut impl Write) -> Result<bool> {
    let d = Defaults {
        size: (100, 100),
        rank: 10,
        trials: 1,
    };
    let (m, mask, b) = synthesize(o, &d)?;
    let dir = o.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    write_dense(&m, create(&dir.join("matrix.txt"))?)?;
    mask.write_csv(create(&dir.join("mask.csv"))?)?;
    writeln!(out, "wrote {}", dir.join("matrix.txt").display())?;
    writeln!(out, "wrote {}", dir.join("mask.csv").display())?;
    if o.noise.is_some() {
        write_dense(&b, create(&dir.join("observed.txt"))?)?;
        writeln!(out, "wrote {}", dir.join("observed.txt").display())?;
    }
    writeln!(
        out,
        "{}x{} rank {}, {} of {} entries observed",
        m.rows(),
        m.cols(),
        o.rank.unwrap_or(d.rank),
        mask.observed_count(),
        m.rows() * m.cols()
    )?;
    Ok(true)
}

fn solve(o: &Opts, out: &mut impl Write) -> Result<bool> {
    let d = Defaults {
        size: (100, 100),
        rank: 10,
        trials: 1,
    };
    let (reference, mask) = match &o.matrix {
        Some(path) => {
            let m = read_dense(BufReader::new(fs::File::open(path)?))?;
            let mask = match &o.mask {
                Some(mp) => ObservationMask::read_csv(BufReader::new(fs::File::open(mp)?))?,
                None => ObservationMask::full(m.rows(), m.cols()),
            };
            (m, mask)
        }
        None => {
            let (_, mask, b) = synthesize(o, &d)?;
            (b, mask)
        }
    };
    let kind = o.solver.first().copied().unwrap_or(SolverKind::StructuredSirls);
    let rank = o.rank.unwrap_or(d.rank).min(reference.rows().min(reference.cols()));
    let settings = o.settings(rank);
    let seed = derive_seed(o.seed.unwrap_or(0), &[3]);
    let (x, iterations, converged) = match kind {
        SolverKind::Sirls => unpack(solve_sirls(
            &reference,
            &mask,
            &crate::sirls::LowRankConfig {
                seed,
                ..settings.sirls
            },
        )?),
        SolverKind::StructuredSirls => {
            let mut cfg = settings.structured;
            cfg.lowrank.seed = seed;
            unpack(solve_structured_sirls(&reference, &mask, &cfg)?)
        }
        SolverKind::IrlsExact => unpack(solve_structured_irls_exact(&reference, &mask, &settings.exact)?),
        SolverKind::StructuredNnm => {
            let r = solve_structured_nnm(&reference, &mask, &settings.nnm)?;
            (r.x, r.iterations, r.converged)
        }
    };
    writeln!(out, "solver = {kind}")?;
    writeln!(out, "observed = {} / {}", mask.observed_count(), reference.rows() * reference.cols())?;
    writeln!(out, "iterations = {iterations}")?;
    writeln!(out, "converged = {converged}")?;
    writeln!(out, "relative_error = {}", relative_error(&reference, &x)?)?;
    if let Some(dir) = &o.out {
        fs::create_dir_all(dir)?;
        write_dense(&x, create(&dir.join("completed.txt"))?)?;
    }
    Ok(true)
}

fn unpack(r: SolveResult) -> (DenseMatrix, usize, bool) {
    (r.x_hat, r.iterations, r.converged)
}

fn grid(o: &Opts, compare: bool, out: &mut impl Write) -> Result<bool> {
    let d = if compare {
        Defaults {
            size: (30, 30),
            rank: 7,
            trials: 3,
        }
    } else {
        Defaults {
            size: (100, 100),
            rank: 10,
            trials: 20,
        }
    };
    let generator = o.generator(&d);
    let mut spec = GridSpec::new(generator, Vec::new(), o.trials.unwrap_or(d.trials), o.seed.unwrap_or(0));
    spec.rates_zero = o.axis(&o.rates_zero)?;
    spec.rates_nonzero = o.axis(&o.rates_nonzero)?;
    spec.noise = o.noise;
    spec.sampling = o.sampling();
    spec.settings = o.settings(generator.r);
    spec.solvers = if !o.solver.is_empty() {
        o.solver.clone()
    } else if compare {
        vec![
            SolverKind::StructuredSirls,
            SolverKind::StructuredNnm,
            SolverKind::Sirls,
            SolverKind::IrlsExact,
        ]
    } else {
        vec![SolverKind::StructuredSirls, SolverKind::Sirls]
    };
    let results = run_grid(&spec)?;
    let dir = o.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    for name in emit_grid_outputs(&results, &dir)? {
        writeln!(out, "wrote {}", dir.join(name).display())?;
    }
    summarize(&results, out)?;
    Ok(true)
}

fn summarize(results: &[CellResult], out: &mut impl Write) -> Result<()> {
    let wins = results.iter().filter(|c| c.binned).count();
    let failures: usize = results.iter().flat_map(|c| &c.solvers).map(|s| s.failures).sum();
    writeln!(out, "cells = {}, ratio < 1 in {wins}, failed solver runs = {failures}", results.len())?;
    Ok(())
}

fn remark(o: &Opts, out: &mut impl Write) -> Result<bool> {
    let d = Defaults {
        size: (10, 10),
        rank: 2,
        trials: 50,
    };
    let mut suite = RemarkSuite::new(o.trials.unwrap_or(d.trials), o.seed.unwrap_or(0));
    suite.generator = o.generator(&d);
    suite.rate_zero = o.rate_zero.unwrap_or(suite.rate_zero);
    suite.rate_nonzero = o.rate_nonzero.unwrap_or(suite.rate_nonzero);
    suite.alpha = o.alpha.unwrap_or(suite.alpha);
    suite.p = o.p.unwrap_or(suite.p);
    suite.sampling = o.sampling();
    let outcomes = run_remark_suite(&suite)?;
    let mut passes = 0;
    for (t, r) in outcomes.iter().enumerate() {
        let ok = r.holds(1e-9);
        passes += usize::from(ok);
        writeln!(
            out,
            "trial {t}: err_structured = {:e}, err_plain = {:e}, {}",
            r.err_structured,
            r.err_plain,
            if ok { "pass" } else { "FAIL" }
        )?;
    }
    writeln!(out, "remark inequality holds in {passes}/{} trials", outcomes.len())?;
    Ok(passes == outcomes.len())
}
