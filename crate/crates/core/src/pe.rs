//! Persistency-of-excitation baseline: block-Hankel matrices, PE checks,
//! Gaussian PE signals, and a harness comparing open-loop excitation against
//! fast exploration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{self, DataTriple, OnlineDataset};
use crate::identify;
use crate::lti::{self, LtiSystem, SimulatedPlant};
use crate::matops::{self, Matrix, Tolerance, Vector};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    m: usize,
    samples: Vec<Vector>,
}

impl InputSignal {
    pub fn new(m: usize, samples: Vec<Vector>) -> Result<Self> {
        for (k, s) in samples.iter().enumerate() {
            if s.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "sample {k} has length {}, expected {m}",
                    s.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("input sample"));
            }
        }
        Ok(Self { m, samples })
    }

    /// Scalar signal from plain values.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(
            1,
            values.iter().map(|&v| Vector::from_element(1, v)).collect(),
        )
    }

    pub fn gaussian(m: usize, len: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed, rng::STREAM_SIGNAL);
        let samples = (0..len).map(|_| lti::gaussian_vector(&mut r, m)).collect();
        Self { m, samples }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn prefix(&self, len: usize) -> InputSignal {
        Self {
            m: self.m,
            samples: self.samples[..len.min(self.len())].to_vec(),
        }
    }
}

/// Depth-`L` block-Hankel matrix of a signal `u_0..u_N`: `Lm` rows and
/// `N + 2 - L` columns, block `(i, j)` equal to `u_{i+j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlock {
    pub depth: usize,
    pub matrix: Matrix,
}

pub fn hankel(signal: &InputSignal, depth: usize) -> Result<HankelBlock> {
    if depth == 0 {
        return Err(Error::InvalidArgument("Hankel depth must be >= 1".into()));
    }
    if signal.len() < depth {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            depth,
        });
    }
    let m = signal.m;
    let cols = signal.len() + 1 - depth;
    let matrix = Matrix::from_fn(depth * m, cols, |r, j| signal.samples[r / m + j][r % m]);
    Ok(HankelBlock { depth, matrix })
}

pub fn is_pe(signal: &InputSignal, depth: usize, tol: &Tolerance) -> Result<bool> {
    let h = hankel(signal, depth)?;
    Ok(matops::rank(&h.matrix, tol)? == depth * signal.m)
}

/// Shortest seeded Gaussian signal that is persistently exciting of order
/// `depth`. Starts from `depth (m + 1) - 1` samples, where the Hankel matrix
/// is square, and appends samples until the rank test passes.
pub fn make_pe_signal(m: usize, depth: usize, seed: u64) -> Result<InputSignal> {
    if depth == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "PE signals need depth >= 1 and m >= 1, got depth = {depth}, m = {m}"
        )));
    }
    let tol = Tolerance::default();
    let cap = 4 * depth * (m + 1);
    let full = InputSignal::gaussian(m, cap, seed);
    for len in (depth * (m + 1) - 1)..=cap {
        let candidate = full.prefix(len);
        if is_pe(&candidate, depth, &tol)? {
            return Ok(candidate);
        }
    }
    Err(Error::ExtensionCapExceeded(cap))
}

/// Open-loop noiseless run of `signal` from `x0`; one triple per sample.
pub fn simulate(sys: &LtiSystem, x0: &Vector, signal: &InputSignal) -> Result<OnlineDataset> {
    if signal.m() != sys.m() {
        return Err(Error::DimensionMismatch(format!(
            "signal has m = {}, system has m = {}",
            signal.m(),
            sys.m()
        )));
    }
    let mut ds = OnlineDataset::new(sys.n(), sys.m());
    let mut x = x0.clone();
    for u in signal.samples() {
        let x_plus = lti::step(sys, &x, u, None)?;
        ds.push(DataTriple {
            x_plus: x_plus.clone(),
            x,
            u: u.clone(),
        })?;
        x = x_plus;
    }
    Ok(ds)
}

/// Whether the open-loop signal achieves the best online identification.
pub fn pe_identification_trial(
    sys: &LtiSystem,
    x0: &Vector,
    signal: &InputSignal,
    tol: &Tolerance,
) -> Result<bool> {
    let ds = simulate(sys, x0, signal)?;
    identify::identification_optimal(&ds, sys, x0, tol)
}

/// Minimum signal length the a-priori argument asks for, as stated:
/// `2 (n + 1) m - 1`.
pub fn bound_stated(n: usize, m: usize) -> usize {
    (2 * (n + 1) * m).saturating_sub(1)
}

/// Minimum length from counting Hankel rows and columns at depth `n + 1`:
/// `(n + 1)(m + 1) - 2`.
pub fn bound_hankel(n: usize, m: usize) -> usize {
    ((n + 1) * (m + 1)).saturating_sub(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub n_tilde: usize,
    pub alg1_steps: usize,
    pub pe_min_length: usize,
    pub bound_paper: usize,
    pub bound_hankel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub rows: Vec<ComparisonRow>,
    pub alg1_steps: usize,
    pub pe_min_length_min: usize,
    pub pe_min_length_median: f64,
    pub bound_paper: usize,
    pub bound_hankel: usize,
}

fn median(xs: &[usize]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_unstable();
    match v.len() {
        0 => f64::NAN,
        l if l % 2 == 1 => v[l / 2] as f64,
        l => (v[l / 2 - 1] + v[l / 2]) as f64 / 2.0,
    }
}

/// Shortest prefix of a seeded Gaussian signal whose open-loop trajectory
/// achieves the best online identification.
pub fn random_signal_min_length(
    sys: &LtiSystem,
    x0: &Vector,
    seed: u64,
    tol: &Tolerance,
) -> Result<usize> {
    let (n, m) = (sys.n(), sys.m());
    let cap = 4 * (n + 1) * (m + 1);
    let target = lti::explorable_subspace_with_tol(sys, x0, tol)?.dim() + m;
    let ds = simulate(sys, x0, &InputSignal::gaussian(m, cap, seed))?;
    for len in 0..=cap {
        if identify::constraint_rank(&ds.prefix(len), tol)? == target {
            return Ok(len);
        }
    }
    Err(Error::PrefixNotFound(cap))
}

pub fn minimal_length_comparison(
    sys: &LtiSystem,
    x0: &Vector,
    seeds: &[u64],
    tol: &Tolerance,
) -> Result<ComparisonSummary> {
    let (n, m) = (sys.n(), sys.m());
    let n_tilde = lti::explorable_subspace_with_tol(sys, x0, tol)?.dim();
    let mut plant = SimulatedPlant::new(sys.clone(), None);
    let alg1_steps = explorer::explore(&mut plant, x0, m, tol)?.steps;
    let rows = seeds
        .iter()
        .map(|&seed| {
            Ok(ComparisonRow {
                seed,
                n,
                m,
                n_tilde,
                alg1_steps,
                pe_min_length: random_signal_min_length(sys, x0, seed, tol)?,
                bound_paper: bound_stated(n, m),
                bound_hankel: bound_hankel(n, m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lengths: Vec<usize> = rows.iter().map(|r| r.pe_min_length).collect();
    Ok(ComparisonSummary {
        alg1_steps,
        pe_min_length_min: lengths.iter().copied().min().unwrap_or(0),
        pe_min_length_median: median(&lengths),
        bound_paper: bound_stated(n, m),
        bound_hankel: bound_hankel(n, m),
        rows,
    })
}

/// CSV with header
/// `seed,n,m,n_tilde,alg1_steps,pe_min_length,bound_paper,bound_hankel`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
