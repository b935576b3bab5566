//! Stabilizing state feedback `u = K x` for an estimated pair, via the
//! discrete algebraic Riccati equation with `Q = q I`, `R = r I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::Estimate;
use crate::lti::{self, LtiSystem};
use crate::matops::{self, Matrix, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiConfig {
    pub q_weight: f64,
    pub r_weight: f64,
    /// Convergence bound on `|P_{k+1} - P_k|_F / max(1, |P_k|_F)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            q_weight: 1.0,
            r_weight: 1.0,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl RiccatiConfig {
    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.q_weight) && ok(self.r_weight) && ok(self.tol)) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(format!(
                "Riccati weights, tolerance and iteration cap must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainResult {
    #[serde(rename = "K", with = "matrix_rows")]
    pub k: Matrix,
    pub closed_loop_radius_est: f64,
    pub closed_loop_radius_true: Option<f64>,
    pub riccati_residual: f64,
    pub iterations: usize,
}

mod matrix_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::matops::{self, Matrix};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matops::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        matops::from_rows(&rows, cols).map_err(serde::de::Error::custom)
    }
}

impl GainResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn solve_spd(lhs: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if let Some(ch) = lhs.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    lhs.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::InvalidArgument("R + B^T P B is singular".into()))
}

/// One Riccati recursion step
/// `A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q`, symmetrized.
///
/// Without the symmetrization the skew part of the roundoff is propagated by
/// the open-loop dynamics and grows without bound on unstable plants.
pub fn riccati_step(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let pa = p * a;
    let btpa = b.transpose() * &pa;
    let gain_term = solve_spd(&(r + b.transpose() * p * b), &btpa)?;
    let next = a.transpose() * pa - btpa.transpose() * gain_term + q;
    Ok((&next + next.transpose()) * 0.5)
}

/// `K = -(R + B^T P B)^{-1} B^T P A`.
pub fn feedback_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let btpa = b.transpose() * p * a;
    Ok(-solve_spd(&(r + b.transpose() * p * b), &btpa)?)
}

fn relative_step(next: &Matrix, p: &Matrix) -> f64 {
    (next - p).norm() / p.norm().max(1.0)
}

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub iterations: usize,
    /// Relative change of one more recursion step applied to `p`.
    pub residual: f64,
}

/// Fixed-point iteration of the Riccati recursion from `P = Q`.
pub fn solve_dare(a: &Matrix, b: &Matrix, cfg: &RiccatiConfig) -> Result<DareSolution> {
    cfg.validate()?;
    let (n, m) = (a.nrows(), b.ncols());
    let q = Matrix::identity(n, n) * cfg.q_weight;
    let r = Matrix::identity(m, m) * cfg.r_weight;
    let mut p = q.clone();
    let mut last = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let next = riccati_step(a, b, &q, &r, &p)?;
        matops::ensure_finite("Riccati iterate", &next)?;
        last = relative_step(&next, &p);
        p = next;
        if last < cfg.tol {
            let residual = relative_step(&riccati_step(a, b, &q, &r, &p)?, &p);
            return Ok(DareSolution {
                p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::RiccatiNoConvergence {
        iterations: cfg.max_iter,
        residual: last,
    })
}

/// LQR gain for the estimate, certified to stabilize it.
pub fn synthesize(est: &Estimate, cfg: &RiccatiConfig) -> Result<GainResult> {
    cfg.validate()?;
    let (a, b) = (&est.a_hat, &est.b_hat);
    if !lti::pbh_stabilizable(a, b, &Tolerance::default())? {
        return Err(Error::NotStabilizable);
    }
    let sol = solve_dare(a, b, cfg)?;
    let r = Matrix::identity(b.ncols(), b.ncols()) * cfg.r_weight;
    let k = feedback_gain(a, b, &r, &sol.p)?;
    let rho = matops::spectral_radius(&(a + b * &k))?;
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::NotStabilized(rho));
    }
    Ok(GainResult {
        k,
        closed_loop_radius_est: rho,
        closed_loop_radius_true: None,
        riccati_residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// Closed-loop spectral radius `rho(A + B K)`.
pub fn certify(sys: &LtiSystem, k: &Matrix) -> Result<f64> {
    if k.nrows() != sys.m() || k.ncols() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            sys.m(),
            sys.n()
        )));
    }
    matops::spectral_radius(&(sys.a() + sys.b() * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn est(a: &[f64], b: &[f64], n: usize, m: usize) -> Estimate {
        Estimate::new(
            Matrix::from_row_slice(n, n, a),
            Matrix::from_row_slice(n, m, b),
        )
        .unwrap()
    }

    #[test]
    fn dead_beat_estimate_needs_no_feedback() {
        let e = Estimate::new(Matrix::zeros(2, 2), Matrix::identity(2, 2)).unwrap();
        let g = synthesize(&e, &RiccatiConfig::default()).unwrap();
        assert_eq!(g.k, Matrix::zeros(2, 2));
        assert_eq!(g.closed_loop_radius_est, 0.0);
        let sol = solve_dare(&e.a_hat, &e.b_hat, &RiccatiConfig::default()).unwrap();
        assert_relative_eq!(sol.p, Matrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn scalar_unstable_plant() {
        // scalar oracle: p <- 4p - 4p^2/(1+p) + 1
        let mut p = 1.0f64;
        for _ in 0..200 {
            p = 4.0 * p - 4.0 * p * p / (1.0 + p) + 1.0;
        }
        let k_oracle = -2.0 * p / (1.0 + p);
        let g = synthesize(&est(&[2.0], &[1.0], 1, 1), &RiccatiConfig::default()).unwrap();
        assert_relative_eq!(g.k[(0, 0)], k_oracle, epsilon = 1e-9);
        assert!((2.0 + g.k[(0, 0)]).abs() < 1.0);
        assert_relative_eq!(
            g.closed_loop_radius_est,
            (2.0 + k_oracle).abs(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn running_example_gain_stabilizes_truth() {
        let e = est(&[2.0, 0.0, 0.0, 0.0], &[1.0, 0.0], 2, 1);
        let g = synthesize(&e, &RiccatiConfig::default()).unwrap();
        assert!(g.closed_loop_radius_est < 1.0);
        let truth = LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        let rho = certify(&truth, &g.k).unwrap();
        assert!(rho < 1.0);
        // the uncontrolled mode 0.5 is untouched by the gain
        assert!(rho >= 0.5 - 1e-12);
    }

    #[test]
    fn non_stabilizable_estimate_is_rejected() {
        let e = est(&[2.0, 0.0, 0.0, 0.5], &[0.0, 1.0], 2, 1);
        assert!(matches!(
            synthesize(&e, &RiccatiConfig::default()),
            Err(Error::NotStabilizable)
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let cfg = RiccatiConfig {
            max_iter: 2,
            ..RiccatiConfig::default()
        };
        let e = est(&[1.5, 1.0, 0.0, 1.2], &[0.0, 1.0], 2, 1);
        assert!(matches!(
            synthesize(&e, &cfg),
            Err(Error::RiccatiNoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let e = est(&[0.5], &[1.0], 1, 1);
        let cfg = RiccatiConfig {
            q_weight: 0.0,
            ..RiccatiConfig::default()
        };
        assert!(synthesize(&e, &cfg).is_err());
    }

    #[test]
    fn certify_examples() {
        let stable = LtiSystem::new(
            Matrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.9]),
            Matrix::from_column_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        assert_relative_eq!(
            certify(&stable, &Matrix::zeros(1, 2)).unwrap(),
            0.9,
            epsilon = 1e-12
        );

        let dead = LtiSystem::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1)).unwrap();
        assert_eq!(
            certify(&dead, &Matrix::from_row_slice(1, 2, &[3.0, -4.0])).unwrap(),
            0.0
        );
        assert!(certify(&dead, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn gain_json_round_trip() {
        let g = synthesize(&est(&[2.0], &[1.0], 1, 1), &RiccatiConfig::default()).unwrap();
        let json = g.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["K"][0][0].is_number());
        assert!(v["closed_loop_radius_true"].is_null());
        assert_eq!(GainResult::from_json(&json).unwrap(), g);
    }
}
