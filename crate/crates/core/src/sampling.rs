//! Observation masks and the sampling operator.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::SolverRng;

/// The set Ω of observed entries of a `rows × cols` matrix.
///
/// The complement Ω^c is kept as a row-major list of flat indices; that order
/// defines the layout of every [`MissingVector`].
#[derive(Clone, PartialEq)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
    missing: Arc<[usize]>,
}

impl ObservationMask {
    /// Builds a mask from observed `(i, j)` pairs; rejects out-of-bounds and
    /// duplicate pairs.
    pub fn new(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut observed = vec![false; rows * cols];
        for &(i, j) in pairs {
            if i >= rows || j >= cols {
                return Err(Error::param(format!("index ({i},{j}) outside {rows}x{cols}")));
            }
            let slot = &mut observed[i * cols + j];
            if *slot {
                return Err(Error::param(format!("duplicate observed index ({i},{j})")));
            }
            *slot = true;
        }
        Ok(Self::from_flags(rows, cols, observed))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let observed = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::from_flags(rows, cols, observed)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_flags(rows, cols, vec![true; rows * cols])
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self::from_flags(rows, cols, vec![false; rows * cols])
    }

    fn from_flags(rows: usize, cols: usize, observed: Vec<bool>) -> Self {
        let missing: Arc<[usize]> = observed
            .iter()
            .enumerate()
            .filter_map(|(k, &o)| (!o).then_some(k))
            .collect();
        Self {
            rows,
            cols,
            observed,
            missing,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.cols + j]
    }

    /// |Ω|.
    pub fn observed_count(&self) -> usize {
        self.observed.len() - self.missing.len()
    }

    /// |Ω^c|.
    pub fn missing_count(&self) -> usize {
        self.missing.len()
    }

    pub fn is_full(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_count() == 0
    }

    /// Row-major flat indices of Ω^c.
    pub fn missing_indices(&self) -> &[usize] {
        &self.missing
    }

    /// Observed pairs in row-major order.
    pub fn observed_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.observed
            .iter()
            .enumerate()
            .filter_map(move |(k, &o)| o.then_some((k / cols, k % cols)))
    }

    pub fn complement(&self) -> Self {
        Self::from_flags(self.rows, self.cols, self.observed.iter().map(|o| !o).collect())
    }

    pub(crate) fn flags(&self) -> &[bool] {
        &self.observed
    }

    fn check_shape(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::dims(self.shape(), x.shape()));
        }
        Ok(())
    }

    /// Writes the `rows,cols` header followed by one `i,j` line per observed entry.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},{}", self.rows, self.cols)?;
        for (i, j) in self.observed_pairs() {
            writeln!(w, "{i},{j}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dims = None;
        let mut pairs = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("cannot parse `{s}`"),
                })
            };
            let (a, b) = line.split_once(',').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected two comma-separated integers".into(),
            })?;
            let pair = (parse(a)?, parse(b)?);
            if dims.is_none() {
                dims = Some(pair);
            } else {
                pairs.push(pair);
            }
        }
        let (rows, cols) = dims.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `rows,cols` header".into(),
        })?;
        Self::new(rows, cols, &pairs)
    }
}

impl std::fmt::Debug for ObservationMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ObservationMask {}x{} ({} observed)",
            self.rows,
            self.cols,
            self.observed_count()
        )
    }
}

/// z(X): the missing entries of a matrix in row-major order of Ω^c.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingVector {
    pub values: Vec<f64>,
    indices: Arc<[usize]>,
    rows: usize,
    cols: usize,
}

impl MissingVector {
    /// Builds a vector laid out like `mask`'s Ω^c.
    pub fn new(mask: &ObservationMask, values: Vec<f64>) -> Result<Self> {
        if values.len() != mask.missing_count() {
            return Err(Error::param(format!(
                "missing vector has {} values, mask has {} missing entries",
                values.len(),
                mask.missing_count()
            )));
        }
        Ok(Self {
            values,
            indices: mask.missing.clone(),
            rows: mask.rows,
            cols: mask.cols,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The Ω^c pairs, aligned with `values`.
    pub fn index_map(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().map(|&k| (k / self.cols, k % self.cols))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::param("replacement values have the wrong length"));
        }
        Ok(Self {
            values,
            indices: self.indices.clone(),
            rows: self.rows,
            cols: self.cols,
        })
    }
}

/// P_Ω(X): keeps observed entries, zeroes the rest.
pub fn project(x: &DenseMatrix, mask: &ObservationMask) -> Result<DenseMatrix> {
    mask.check_shape(x)?;
    let mut out = x.clone();
    for &k in mask.missing_indices() {
        out.as_mut_slice()[k] = 0.0;
    }
    Ok(out)
}

/// P_Ω^c(X): keeps missing entries, zeroes the observed ones.
pub fn project_complement(x: &DenseMatrix, mask: &ObservationMask) -> Result<DenseMatrix> {
    mask.check_shape(x)?;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for &k in mask.missing_indices() {
        out.as_mut_slice()[k] = x.as_slice()[k];
    }
    Ok(out)
}

/// z(X).
pub fn gather_missing(x: &DenseMatrix, mask: &ObservationMask) -> Result<MissingVector> {
    mask.check_shape(x)?;
    let values = mask.missing_indices().iter().map(|&k| x.as_slice()[k]).collect();
    MissingVector::new(mask, values)
}

/// Writes `z` into the Ω^c entries of a copy of `x`; Ω entries are untouched.
pub fn scatter_missing(z: &MissingVector, x: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = x.clone();
    scatter_missing_into(z, &mut out)?;
    Ok(out)
}

pub(crate) fn scatter_missing_into(z: &MissingVector, x: &mut DenseMatrix) -> Result<()> {
    if (z.rows, z.cols) != x.shape() {
        return Err(Error::dims((z.rows, z.cols), x.shape()));
    }
    if z.values.len() != z.indices.len() {
        return Err(Error::param("missing vector length does not match its index map"));
    }
    let data = x.as_mut_slice();
    for (&k, &v) in z.indices.iter().zip(&z.values) {
        data[k] = v;
    }
    Ok(())
}

/// How many entries of each class [`structured_sample_with`] observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent Bernoulli draw per entry.
    #[default]
    Bernoulli,
    /// Exactly `round(rate · class size)` entries per class, chosen uniformly.
    ExactCount,
}

/// Samples entries with `|m_ij| <= zero_tol` at `rate_zero` and all other
/// entries at `rate_nonzero`, independently per entry.
pub fn structured_sample(
    m: &DenseMatrix,
    rate_zero: f64,
    rate_nonzero: f64,
    zero_tol: f64,
    rng: &mut SolverRng,
) -> Result<ObservationMask> {
    structured_sample_with(m, rate_zero, rate_nonzero, zero_tol, SamplingMode::Bernoulli, rng)
}

pub fn structured_sample_with(
    m: &DenseMatrix,
    rate_zero: f64,
    rate_nonzero: f64,
    zero_tol: f64,
    mode: SamplingMode,
    rng: &mut SolverRng,
) -> Result<ObservationMask> {
    for (name, rate) in [("rate_zero", rate_zero), ("rate_nonzero", rate_nonzero)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::param(format!("{name} = {rate} outside [0, 1]")));
        }
    }
    if !(zero_tol >= 0.0) {
        return Err(Error::param("zero_tol must be nonnegative"));
    }
    let is_zero: Vec<bool> = m.as_slice().iter().map(|v| v.abs() <= zero_tol).collect();
    let observed = match mode {
        SamplingMode::Bernoulli => is_zero
            .iter()
            .map(|&z| {
                let rate = if z { rate_zero } else { rate_nonzero };
                // draw for every entry so the stream does not depend on the rates
                let u: f64 = rng.random();
                u < rate
            })
            .collect(),
        SamplingMode::ExactCount => {
            let mut observed = vec![false; is_zero.len()];
            for (class, rate) in [(true, rate_zero), (false, rate_nonzero)] {
                let members: Vec<usize> = (0..is_zero.len()).filter(|&k| is_zero[k] == class).collect();
                let take = (rate * members.len() as f64).round() as usize;
                for pick in index::sample(rng, members.len(), take.min(members.len())) {
                    observed[members[pick]] = true;
                }
            }
            observed
        }
    };
    Ok(ObservationMask::from_flags(m.rows(), m.cols(), observed))
}

/// `r(m + n − r) / observed`.
pub fn degrees_of_freedom_ratio(m: usize, n: usize, r: usize, observed: usize) -> Result<f64> {
    if observed == 0 {
        return Err(Error::param("degrees-of-freedom ratio needs at least one observation"));
    }
    if r > m.min(n) {
        return Err(Error::param(format!("rank {r} exceeds min({m}, {n})")));
    }
    Ok((r * (m + n - r)) as f64 / observed as f64)
}
