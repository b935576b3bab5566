//! Least-norm identification from online data and the geometry of the set of
//! data-consistent parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::OnlineDataset;
use crate::lti::{self, LtiSystem, SubspaceBasis};
use crate::matops::{self, Matrix, Tolerance, Vector};

/// A candidate pair `(A_hat, B_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EstimateJson", into = "EstimateJson")]
pub struct Estimate {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
}

#[derive(Serialize, Deserialize)]
struct EstimateJson {
    #[serde(rename = "A_hat")]
    a_hat: Vec<Vec<f64>>,
    #[serde(rename = "B_hat")]
    b_hat: Vec<Vec<f64>>,
}

impl TryFrom<EstimateJson> for Estimate {
    type Error = Error;

    fn try_from(j: EstimateJson) -> Result<Self> {
        let n = j.a_hat.len();
        if j.b_hat.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "A_hat has {n} rows, B_hat has {}",
                j.b_hat.len()
            )));
        }
        let m = j.b_hat.first().map_or(0, Vec::len);
        Estimate::new(
            matops::from_rows(&j.a_hat, n)?,
            matops::from_rows(&j.b_hat, m)?,
        )
    }
}

impl From<Estimate> for EstimateJson {
    fn from(e: Estimate) -> Self {
        EstimateJson {
            a_hat: matops::to_rows(&e.a_hat),
            b_hat: matops::to_rows(&e.b_hat),
        }
    }
}

impl Estimate {
    pub fn new(a_hat: Matrix, b_hat: Matrix) -> Result<Self> {
        // reuse the system invariants: square A, matching rows, finite
        let sys = LtiSystem::new(a_hat, b_hat)?;
        Ok(Self {
            a_hat: sys.a().clone(),
            b_hat: sys.b().clone(),
        })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            a_hat: Matrix::zeros(n, n),
            b_hat: Matrix::zeros(n, m),
        }
    }

    pub fn n(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_hat.ncols()
    }

    pub fn as_system(&self) -> LtiSystem {
        LtiSystem::new(self.a_hat.clone(), self.b_hat.clone()).expect("estimate invariants")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Pseudo estimate together with how well it explains the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoEstimate {
    pub estimate: Estimate,
    /// Largest per-triple residual `|x_plus - A_hat x - B_hat u|`.
    pub max_residual: f64,
    /// Set when the data admits no exactly consistent pair (noise or
    /// hand-made data); the estimate is then the least-squares fit.
    pub inconsistent: bool,
}

/// Data matrices `X`, `X_plus`, `U`, concatenated over one or more datasets.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub x: Matrix,
    pub x_plus: Matrix,
    pub u: Matrix,
}

impl DataMatrices {
    pub fn from_datasets(datasets: &[&OnlineDataset]) -> Result<Self> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no datasets given".into()))?;
        let (n, m) = (first.n(), first.m());
        if datasets.iter().any(|d| d.n() != n || d.m() != m) {
            return Err(Error::DimensionMismatch(
                "datasets disagree on (n, m)".into(),
            ));
        }
        let triples: Vec<_> = datasets.iter().flat_map(|d| d.triples()).collect();
        let cols = triples.len();
        Ok(Self {
            x: Matrix::from_fn(n, cols, |i, k| triples[k].x[i]),
            x_plus: Matrix::from_fn(n, cols, |i, k| triples[k].x_plus[i]),
            u: Matrix::from_fn(m, cols, |i, k| triples[k].u[i]),
        })
    }

    /// `(n + m) x N` regressor `(X; U)`.
    pub fn regressor(&self) -> Matrix {
        let (n, m, cols) = (self.x.nrows(), self.u.nrows(), self.x.ncols());
        let mut z = Matrix::zeros(n + m, cols);
        z.view_mut((0, 0), (n, cols)).copy_from(&self.x);
        z.view_mut((n, 0), (m, cols)).copy_from(&self.u);
        z
    }

    /// Largest norm among all observed states and inputs, at least one.
    pub fn scale(&self) -> f64 {
        let col_max = |m: &Matrix| m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        1f64.max(col_max(&self.x))
            .max(col_max(&self.x_plus))
            .max(col_max(&self.u))
    }

    pub fn residuals(&self, est: &Estimate) -> Vec<f64> {
        let r = &self.x_plus - &est.a_hat * &self.x - &est.b_hat * &self.u;
        r.column_iter().map(|c| c.norm()).collect()
    }
}

/// Minimum-Frobenius-norm pair consistent with `dataset`:
/// `(A_hat B_hat) = X_plus (X; U)^+`. An empty dataset gives the zero pair.
pub fn pseudo_estimate(dataset: &OnlineDataset, tol: &Tolerance) -> Result<PseudoEstimate> {
    pseudo_estimate_stacked(&[dataset], tol)
}

/// Joint pseudo estimate over several explorations, with the data matrices of
/// all datasets concatenated column-wise before the pseudoinverse.
pub fn pseudo_estimate_stacked(
    datasets: &[&OnlineDataset],
    tol: &Tolerance,
) -> Result<PseudoEstimate> {
    let data = DataMatrices::from_datasets(datasets)?;
    let (n, m) = (data.x.nrows(), data.u.nrows());
    if data.x.ncols() == 0 {
        return Ok(PseudoEstimate {
            estimate: Estimate::zeros(n, m),
            max_residual: 0.0,
            inconsistent: false,
        });
    }
    let theta = &data.x_plus * matops::pinv(&data.regressor(), tol)?;
    let estimate = Estimate {
        a_hat: theta.columns(0, n).into_owned(),
        b_hat: theta.columns(n, m).into_owned(),
    };
    let max_residual = data.residuals(&estimate).into_iter().fold(0.0, f64::max);
    let inconsistent = max_residual > tol.consistency_threshold(data.scale());
    Ok(PseudoEstimate {
        estimate,
        max_residual,
        inconsistent,
    })
}

/// Whether `est` explains every triple of `dataset` up to the consistency
/// threshold scaled by the trajectory magnitude.
pub fn consistent(dataset: &OnlineDataset, est: &Estimate, tol: &Tolerance) -> Result<bool> {
    if est.n() != dataset.n() || est.m() != dataset.m() {
        return Err(Error::DimensionMismatch(format!(
            "estimate ({}, {}) against dataset ({}, {})",
            est.n(),
            est.m(),
            dataset.n(),
            dataset.m()
        )));
    }
    if dataset.is_empty() {
        return Ok(true);
    }
    let data = DataMatrices::from_datasets(&[dataset])?;
    let bound = tol.consistency_threshold(data.scale());
    Ok(data.residuals(est).into_iter().all(|r| r <= bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistentSetInfo {
    /// Numerical rank of the stacked data `(x_k; u_k)`.
    pub constraint_rank: usize,
    /// Dimension of the affine set of consistent pairs, `n (n + m) - n rank`.
    pub solution_dim: usize,
}

/// Rank of the stacked data. Columns are normalized before the rank decision
/// so states of very different magnitude along one trajectory are weighed
/// equally.
pub fn constraint_rank(dataset: &OnlineDataset, tol: &Tolerance) -> Result<usize> {
    let cols: Vec<Vector> = dataset
        .stacked_input_state()
        .column_iter()
        .map(|c| c.into_owned())
        .collect();
    Ok(matops::orthonormal_basis(dataset.n() + dataset.m(), &cols, tol)?.ncols())
}

pub fn consistent_set_info(dataset: &OnlineDataset, tol: &Tolerance) -> Result<ConsistentSetInfo> {
    let (n, m) = (dataset.n(), dataset.m());
    let constraint_rank = constraint_rank(dataset, tol)?;
    Ok(ConsistentSetInfo {
        constraint_rank,
        solution_dim: n * (n + m) - n * constraint_rank,
    })
}

/// Oracle-side check that the data pins down everything an online experiment
/// from `x0` can: the stacked data spans `V_exp(x0) x R^m`.
pub fn identification_optimal(
    dataset: &OnlineDataset,
    sys: &LtiSystem,
    x0: &Vector,
    tol: &Tolerance,
) -> Result<bool> {
    if sys.n() != dataset.n() || sys.m() != dataset.m() {
        return Err(Error::DimensionMismatch(
            "system and dataset dimensions differ".into(),
        ));
    }
    let n_tilde = lti::explorable_subspace_with_tol(sys, x0, tol)?.dim();
    Ok(constraint_rank(dataset, tol)? == n_tilde + dataset.m())
}

/// An estimate expressed in an orthonormal frame `T = [T1 T2]` whose first
/// block spans a given subspace: `T^T A_hat T` and `T^T B_hat`, split into
/// blocks.
#[derive(Debug, Clone)]
pub struct FrameBlocks {
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
}

pub fn frame_blocks(a: &Matrix, b: &Matrix, subspace: &SubspaceBasis) -> FrameBlocks {
    let n = a.nrows();
    let k = subspace.dim();
    let mut t = Matrix::zeros(n, n);
    t.view_mut((0, 0), (n, k)).copy_from(subspace.basis());
    t.view_mut((0, k), (n, n - k))
        .copy_from(&subspace.complement());
    let at = t.transpose() * a * &t;
    let bt = t.transpose() * b;
    let m = b.ncols();
    FrameBlocks {
        a11: at.view((0, 0), (k, k)).into_owned(),
        a12: at.view((0, k), (k, n - k)).into_owned(),
        a21: at.view((k, 0), (n - k, k)).into_owned(),
        a22: at.view((k, k), (n - k, n - k)).into_owned(),
        b1: bt.view((0, 0), (k, m)).into_owned(),
        b2: bt.view((k, 0), (n - k, m)).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::{explore, DataTriple};
    use crate::lti::SimulatedPlant;
    use approx::assert_relative_eq;

    fn running_example() -> LtiSystem {
        LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap()
    }

    fn example_dataset() -> OnlineDataset {
        let mut plant = SimulatedPlant::new(running_example(), None);
        explore(
            &mut plant,
            &Vector::from_column_slice(&[1.0, 0.0]),
            1,
            &Tolerance::default(),
        )
        .unwrap()
        .dataset
    }

    #[test]
    fn running_example_estimate() {
        // A e1 = 2 e1 and 2 A e1 + B = 5 e1 leave the second column of A and
        // the second row free; the least-norm choice zeroes them.
        let fit = pseudo_estimate(&example_dataset(), &Tolerance::default()).unwrap();
        assert!(!fit.inconsistent);
        assert_relative_eq!(
            fit.estimate.a_hat,
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fit.estimate.b_hat,
            Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_dataset_gives_zero_estimate() {
        let fit = pseudo_estimate(&OnlineDataset::new(2, 1), &Tolerance::default()).unwrap();
        assert_eq!(fit.estimate, Estimate::zeros(2, 1));
        assert!(!fit.inconsistent);
    }

    #[test]
    fn inconsistent_data_is_flagged() {
        // x = 1 maps to 1 then to 3 with zero input: no scalar A explains both
        let ds = OnlineDataset::from_triples(
            1,
            1,
            vec![
                DataTriple {
                    x_plus: Vector::from_element(1, 1.0),
                    x: Vector::from_element(1, 1.0),
                    u: Vector::from_element(1, 0.0),
                },
                DataTriple {
                    x_plus: Vector::from_element(1, 3.0),
                    x: Vector::from_element(1, 1.0),
                    u: Vector::from_element(1, 0.0),
                },
            ],
        )
        .unwrap();
        let fit = pseudo_estimate(&ds, &Tolerance::default()).unwrap();
        assert!(fit.inconsistent);
        assert_relative_eq!(fit.estimate.a_hat[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.max_residual, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn consistency_examples() {
        let tol = Tolerance::default();
        let ds = example_dataset();
        let sys = running_example();
        let truth = Estimate::new(sys.a().clone(), sys.b().clone()).unwrap();
        assert!(consistent(&ds, &truth, &tol).unwrap());

        let fit = pseudo_estimate(&ds, &tol).unwrap().estimate;
        let mut free = fit.clone();
        free.a_hat[(1, 1)] += 1.0;
        assert!(consistent(&ds, &free, &tol).unwrap());
        let mut pinned = fit;
        pinned.a_hat[(0, 0)] += 1.0;
        assert!(!consistent(&ds, &pinned, &tol).unwrap());

        assert!(consistent(&ds, &Estimate::zeros(3, 1), &tol).is_err());
    }

    #[test]
    fn consistent_set_info_examples() {
        let tol = Tolerance::default();
        let empty = consistent_set_info(&OnlineDataset::new(2, 1), &tol).unwrap();
        assert_eq!(
            empty,
            ConsistentSetInfo {
                constraint_rank: 0,
                solution_dim: 6
            }
        );

        let info = consistent_set_info(&example_dataset(), &tol).unwrap();
        assert_eq!(
            info,
            ConsistentSetInfo {
                constraint_rank: 2,
                solution_dim: 2
            }
        );

        // double integrator is controllable: full identification
        let sys = LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let mut plant = SimulatedPlant::new(sys.clone(), None);
        let x0 = Vector::from_column_slice(&[1.0, 0.0]);
        let rep = explore(&mut plant, &x0, 1, &tol).unwrap();
        let info = consistent_set_info(&rep.dataset, &tol).unwrap();
        assert_eq!(
            info,
            ConsistentSetInfo {
                constraint_rank: 3,
                solution_dim: 0
            }
        );
        let fit = pseudo_estimate(&rep.dataset, &tol).unwrap().estimate;
        assert_relative_eq!(fit.a_hat, *sys.a(), epsilon = 1e-8);
        assert_relative_eq!(fit.b_hat, *sys.b(), epsilon = 1e-8);
    }

    #[test]
    fn identification_optimal_examples() {
        let tol = Tolerance::default();
        let sys = running_example();
        let x0 = Vector::from_column_slice(&[1.0, 0.0]);
        let ds = example_dataset();
        assert!(identification_optimal(&ds, &sys, &x0, &tol).unwrap());
        assert!(!identification_optimal(&ds.prefix(1), &sys, &x0, &tol).unwrap());
    }

    #[test]
    fn estimate_json_layout() {
        let est = pseudo_estimate(&example_dataset(), &Tolerance::default())
            .unwrap()
            .estimate;
        let json = est.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_relative_eq!(v["A_hat"][0][0].as_f64().unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(v["B_hat"].as_array().unwrap().len(), 2);
        assert_relative_eq!(v["B_hat"][0][0].as_f64().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(Estimate::from_json(&json).unwrap(), est);
        assert!(Estimate::from_json(r#"{"A_hat": [[1, 2]], "B_hat": [[1]]}"#).is_err());
    }

    #[test]
    fn frame_blocks_of_running_example() {
        let sys = running_example();
        let v = lti::explorable_subspace(&sys, &Vector::from_column_slice(&[1.0, 0.0])).unwrap();
        let est = pseudo_estimate(&example_dataset(), &Tolerance::default())
            .unwrap()
            .estimate;
        let blk = frame_blocks(&est.a_hat, &est.b_hat, &v);
        assert_relative_eq!(blk.a11[(0, 0)], 2.0, epsilon = 1e-12);
        assert!(blk.a12.amax() < 1e-12 && blk.a21.amax() < 1e-12 && blk.a22.amax() < 1e-12);
        assert!(blk.b2.amax() < 1e-12);
        assert_relative_eq!(blk.b1[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }
}
