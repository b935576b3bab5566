//! Fast exploration: drive a plant online, exciting one input channel each
//! time the current state adds no new direction, until every channel has been
//! used and the state stops growing the span once more.
//!
//! Also hosts the greedy-exploration checks that apply to any strategy: whether
//! a proposed next input adds an independent constraint, and whether a dataset
//! already pins down everything an online experiment can.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::Plant;
use crate::matops::{self, Matrix, Tolerance, Vector};

/// One observed transition `x_plus = A x + B u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTriple {
    #[serde(with = "crate::vecser")]
    pub x_plus: Vector,
    #[serde(with = "crate::vecser")]
    pub x: Vector,
    #[serde(with = "crate::vecser")]
    pub u: Vector,
}

/// Transitions from a single trajectory: each triple starts exactly where the
/// previous one ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetJson")]
pub struct OnlineDataset {
    n: usize,
    m: usize,
    triples: Vec<DataTriple>,
}

#[derive(Deserialize)]
struct DatasetJson {
    n: usize,
    m: usize,
    triples: Vec<DataTriple>,
}

impl TryFrom<DatasetJson> for OnlineDataset {
    type Error = Error;

    fn try_from(j: DatasetJson) -> Result<Self> {
        OnlineDataset::from_triples(j.n, j.m, j.triples)
    }
}

impl OnlineDataset {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            triples: Vec::new(),
        }
    }

    pub fn from_triples(n: usize, m: usize, triples: Vec<DataTriple>) -> Result<Self> {
        let mut ds = Self::new(n, m);
        for t in triples {
            ds.push(t)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, t: DataTriple) -> Result<()> {
        if t.x.len() != self.n || t.x_plus.len() != self.n || t.u.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "triple ({}, {}, {}) in a dataset with n = {}, m = {}",
                t.x_plus.len(),
                t.x.len(),
                t.u.len(),
                self.n,
                self.m
            )));
        }
        if [&t.x, &t.x_plus, &t.u]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite("data triple"));
        }
        if let Some(prev) = self.triples.last() {
            if prev.x_plus != t.x {
                return Err(Error::BrokenChain(self.triples.len()));
            }
        }
        self.triples.push(t);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[DataTriple] {
        &self.triples
    }

    /// The first `k` triples.
    pub fn prefix(&self, k: usize) -> OnlineDataset {
        Self {
            n: self.n,
            m: self.m,
            triples: self.triples[..k.min(self.len())].to_vec(),
        }
    }

    pub fn last_x_plus(&self) -> Option<&Vector> {
        self.triples.last().map(|t| &t.x_plus)
    }

    /// `(m + n) x N` matrix with columns `(u_k; x_k)`.
    pub fn stacked_input_state(&self) -> Matrix {
        Matrix::from_fn(self.m + self.n, self.len(), |i, k| {
            let t = &self.triples[k];
            if i < self.m {
                t.u[i]
            } else {
                t.x[i - self.m]
            }
        })
    }

    fn stacked_columns(&self) -> Vec<Vector> {
        self.stacked_input_state()
            .column_iter()
            .map(|c| c.into_owned())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub dataset: OnlineDataset,
    pub steps: usize,
    /// `(step index, input channel)` of each unit excitation, channels
    /// zero-based and in increasing order.
    pub excitation_times: Vec<(usize, usize)>,
}

pub fn step_cap(n: usize, m: usize) -> usize {
    2 * (n + m) + 4
}

/// Runs fast exploration from `x0` against `plant`.
///
/// At each step the input is zero unless the current state lies in the span
/// of all earlier states (and the origin); then the next unused channel gets a
/// unit input. Once every channel has been used, the next dependent state
/// ends the run without querying the plant. On a noiseless plant this takes
/// exactly `dim V_exp(x0) + m` steps.
pub fn explore<P: Plant + ?Sized>(
    plant: &mut P,
    x0: &Vector,
    m: usize,
    tol: &Tolerance,
) -> Result<ExplorationReport> {
    explore_with_cap(plant, x0, m, tol, step_cap(plant.n(), m))
}

pub(crate) fn explore_with_cap<P: Plant + ?Sized>(
    plant: &mut P,
    x0: &Vector,
    m: usize,
    tol: &Tolerance,
    cap: usize,
) -> Result<ExplorationReport> {
    let n = plant.n();
    if x0.len() != n || plant.m() != m {
        return Err(Error::DimensionMismatch(format!(
            "x0 of length {} and m = {m} for a plant with n = {n}, m = {}",
            x0.len(),
            plant.m()
        )));
    }
    let mut dataset = OnlineDataset::new(n, m);
    let mut excitation_times = Vec::with_capacity(m);
    // x_{-1} = 0 seeds the span so that a zero state counts as dependent
    let mut history = vec![Vector::zeros(n)];
    let mut channel = 0;
    let mut x = x0.clone();
    loop {
        let mut u = Vector::zeros(m);
        if matops::span_contains(&history, &x, tol)? {
            if channel >= m {
                break;
            }
            u[channel] = 1.0;
            excitation_times.push((dataset.len(), channel));
            channel += 1;
        }
        if dataset.len() == cap {
            return Err(Error::StepCapExceeded {
                cap,
                partial: Box::new(dataset),
            });
        }
        let x_plus = plant.step(&x, &u)?;
        dataset.push(DataTriple {
            x_plus: x_plus.clone(),
            x: x.clone(),
            u,
        })?;
        history.push(x);
        x = x_plus;
    }
    Ok(ExplorationReport {
        steps: dataset.len(),
        dataset,
        excitation_times,
    })
}

fn check_nonempty(dataset: &OnlineDataset) -> Result<&Vector> {
    dataset
        .last_x_plus()
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))
}

/// True when applying `u_next` at the current state would add a constraint
/// independent of those already in `dataset`.
pub fn input_informative(
    dataset: &OnlineDataset,
    u_next: &Vector,
    tol: &Tolerance,
) -> Result<bool> {
    let x_last = check_nonempty(dataset)?;
    if u_next.len() != dataset.m() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {}, dataset has m = {}",
            u_next.len(),
            dataset.m()
        )));
    }
    let probe = Vector::from_iterator(
        dataset.m() + dataset.n(),
        u_next.iter().chain(x_last.iter()).copied(),
    );
    Ok(!matops::span_contains(
        &dataset.stacked_columns(),
        &probe,
        tol,
    )?)
}

/// True when no input at the current state could add information, i.e. the
/// data already determines the best identifiable set.
///
/// Membership for every input reduces to membership of `(0; x_last)` and of
/// every `(e_j; 0)`.
pub fn exploration_complete(dataset: &OnlineDataset, tol: &Tolerance) -> Result<bool> {
    let x_last = check_nonempty(dataset)?;
    let (n, m) = (dataset.n(), dataset.m());
    let cols = dataset.stacked_columns();
    let basis = matops::orthonormal_basis(n + m, &cols, tol)?;
    let inside = |v: &Vector| {
        matops::projection_residual(&basis, v) <= matops::span_threshold(v, cols.len(), tol)
    };
    let mut probe = Vector::zeros(n + m);
    probe.rows_mut(m, n).copy_from(x_last);
    if !inside(&probe) {
        return Ok(false);
    }
    for j in 0..m {
        let mut e = Vector::zeros(n + m);
        e[j] = 1.0;
        if !inside(&e) {
            return Ok(false);
        }
    }
    Ok(true)
}
