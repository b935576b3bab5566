//! Ground-truth plant `x_{k+1} = A x_k + B u_k`, its simulation, and the
//! oracle-side subspace computations the explorer is checked against.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{self, Matrix, Tolerance, Vector};
use crate::rng;

const RESAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
}

#[derive(Serialize, Deserialize)]
struct SystemJson {
    n: usize,
    m: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

impl TryFrom<SystemJson> for LtiSystem {
    type Error = Error;

    fn try_from(j: SystemJson) -> Result<Self> {
        if j.a.len() != j.n || j.b.len() != j.n {
            return Err(Error::DimensionMismatch(format!(
                "declared n = {} but A has {} rows and B has {} rows",
                j.n,
                j.a.len(),
                j.b.len()
            )));
        }
        LtiSystem::new(matops::from_rows(&j.a, j.n)?, matops::from_rows(&j.b, j.m)?)
    }
}

impl From<LtiSystem> for SystemJson {
    fn from(s: LtiSystem) -> Self {
        SystemJson {
            n: s.n(),
            m: s.m(),
            a: matops::to_rows(&s.a),
            b: matops::to_rows(&s.b),
        }
    }
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, A has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        matops::ensure_finite("A", &a)?;
        matops::ensure_finite("B", &b)?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Additive i.i.d. Gaussian process noise on the state update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    std_dev: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn new(std_dev: f64, seed: u64) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise std_dev must be finite and >= 0, got {std_dev}"
            )));
        }
        Ok(Self { std_dev, seed })
    }

    pub fn std_dev(&self) -> f64 {
        self.std_dev
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The noise vector added at step `step`; a pure function of seed and step.
    pub fn sample(&self, step: u64, n: usize) -> Vector {
        let mut r = rng::seeded(self.seed, rng::STREAM_NOISE_BASE.wrapping_add(step));
        Vector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut r);
            self.std_dev * z
        })
    }
}

fn check_dims(sys: &LtiSystem, x: &Vector, u: &Vector) -> Result<()> {
    if x.len() != sys.n() || u.len() != sys.m() {
        return Err(Error::DimensionMismatch(format!(
            "state {} / input {} for a system with n = {}, m = {}",
            x.len(),
            u.len(),
            sys.n(),
            sys.m()
        )));
    }
    Ok(())
}

/// One step of the dynamics. With `noise = Some((spec, k))` the step-`k`
/// noise sample of `spec` is added.
pub fn step(
    sys: &LtiSystem,
    x: &Vector,
    u: &Vector,
    noise: Option<(&NoiseSpec, u64)>,
) -> Result<Vector> {
    check_dims(sys, x, u)?;
    let mut next = &sys.a * x + &sys.b * u;
    if let Some((spec, k)) = noise {
        if spec.std_dev > 0.0 {
            next += spec.sample(k, sys.n());
        }
    }
    Ok(next)
}

/// Anything that can be driven one step at a time from a given state.
pub trait Plant {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn step(&mut self, x: &Vector, u: &Vector) -> Result<Vector>;
}

/// Simulated plant backed by a known system, counting its own steps so the
/// noise sequence is reproducible.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    sys: LtiSystem,
    noise: Option<NoiseSpec>,
    steps: u64,
}

impl SimulatedPlant {
    pub fn new(sys: LtiSystem, noise: Option<NoiseSpec>) -> Self {
        Self {
            sys,
            noise,
            steps: 0,
        }
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }
}

impl Plant for SimulatedPlant {
    fn n(&self) -> usize {
        self.sys.n()
    }

    fn m(&self) -> usize {
        self.sys.m()
    }

    fn step(&mut self, x: &Vector, u: &Vector) -> Result<Vector> {
        let k = self.steps;
        let next = step(&self.sys, x, u, self.noise.as_ref().map(|s| (s, k)))?;
        self.steps += 1;
        Ok(next)
    }
}

/// Orthonormal basis of a subspace of `R^ambient_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    ambient_dim: usize,
    basis: Matrix,
}

impl SubspaceBasis {
    pub fn new(basis: Matrix) -> Result<Self> {
        let k = basis.ncols();
        let gram = basis.tr_mul(&basis);
        if (gram - Matrix::identity(k, k)).amax() > 1e-10 {
            return Err(Error::InvalidArgument(
                "subspace basis columns are not orthonormal".into(),
            ));
        }
        Ok(Self {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn columns(&self) -> Vec<Vector> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    /// Orthonormal completion `[basis | complement]` of the ambient space.
    pub fn complement(&self) -> Matrix {
        let n = self.ambient_dim;
        let proj = Matrix::identity(n, n) - &self.basis * self.basis.transpose();
        let dec = matops::svd(&proj).expect("projector is finite");
        dec.u.columns(0, n - self.dim()).into_owned()
    }

    pub fn contains(&self, v: &Vector, tol: &Tolerance) -> bool {
        matops::projection_residual(&self.basis, v) <= matops::span_threshold(v, self.dim(), tol)
    }
}

/// Smallest `A`-invariant subspace containing `x0` and the columns of `B`.
pub fn explorable_subspace(sys: &LtiSystem, x0: &Vector) -> Result<SubspaceBasis> {
    explorable_subspace_with_tol(sys, x0, &Tolerance::default())
}

/// Krylov closure of the generators computed by block Arnoldi: the generators
/// are orthonormalized, then `A` is applied to each newly added direction and
/// the part orthogonal to the current basis is kept when it is numerically
/// nonzero. Cayley-Hamilton bounds this at depth `n - 1`.
pub fn explorable_subspace_with_tol(
    sys: &LtiSystem,
    x0: &Vector,
    tol: &Tolerance,
) -> Result<SubspaceBasis> {
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, system has n = {n}",
            x0.len()
        )));
    }
    let mut gens = vec![x0.clone()];
    gens.extend(sys.b.column_iter().map(|c| c.into_owned()));
    let start = matops::orthonormal_basis(n, &gens, tol)?;
    let mut basis: Vec<Vector> = start.column_iter().map(|c| c.into_owned()).collect();
    let mut frontier = basis.clone();
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for q in &frontier {
            let w = &sys.a * q;
            let mut r = w.clone();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
            }
            if r.norm() > matops::span_threshold(&w, basis.len(), tol) {
                let r = r.normalize();
                basis.push(r.clone());
                next.push(r);
                if basis.len() == n {
                    break;
                }
            }
        }
        frontier = next;
    }
    let mat = if basis.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&basis)
    };
    SubspaceBasis::new(mat)
}

/// Controllable subspace, i.e. the explorable subspace from the origin.
pub fn controllable_subspace(sys: &LtiSystem) -> Result<SubspaceBasis> {
    explorable_subspace(sys, &Vector::zeros(sys.n()))
}

/// `(A^{N-1} B, ..., A B, B)`, an `n x N m` block matrix.
pub fn reachability_matrix(sys: &LtiSystem, depth: usize) -> Result<Matrix> {
    if depth == 0 {
        return Err(Error::InvalidArgument(
            "reachability depth must be >= 1".into(),
        ));
    }
    let (n, m) = (sys.n(), sys.m());
    let mut out = Matrix::zeros(n, depth * m);
    let mut block = sys.b.clone();
    for j in 0..depth {
        let col = (depth - 1 - j) * m;
        out.view_mut((0, col), (n, m)).copy_from(&block);
        block = &sys.a * block;
    }
    Ok(out)
}

pub fn controllability_rank(sys: &LtiSystem, tol: &Tolerance) -> Result<usize> {
    if sys.n() == 0 || sys.m() == 0 {
        return Ok(0);
    }
    matops::rank(&reachability_matrix(sys, sys.n())?, tol)
}

/// PBH test: every eigenvalue with `|λ| >= 1` must leave `[A - λI, B]` with
/// full row rank.
pub fn is_stabilizable(sys: &LtiSystem) -> Result<bool> {
    is_stabilizable_with_tol(sys, &Tolerance::default())
}

pub fn is_stabilizable_with_tol(sys: &LtiSystem, tol: &Tolerance) -> Result<bool> {
    pbh_stabilizable(&sys.a, &sys.b, tol)
}

pub(crate) fn pbh_stabilizable(a: &Matrix, b: &Matrix, tol: &Tolerance) -> Result<bool> {
    let (n, m) = (a.nrows(), b.ncols());
    for lambda in matops::eigenvalues(a)? {
        if lambda.norm() < 1.0 {
            continue;
        }
        let pencil = nalgebra::DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let d = if i == j {
                    lambda
                } else {
                    Complex::new(0.0, 0.0)
                };
                Complex::new(a[(i, j)], 0.0) - d
            } else {
                Complex::new(b[(i, j - n)], 0.0)
            }
        });
        if matops::rank_complex(&pencil, tol)? < n {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Controllable,
    StabilizableUncontrollable,
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "controllable" => Ok(Self::Controllable),
            "stabilizable_uncontrollable" | "stabilizable-uncontrollable" => {
                Ok(Self::StabilizableUncontrollable)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown system kind {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Controllable => "controllable",
            Self::StabilizableUncontrollable => "stabilizable_uncontrollable",
        })
    }
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let qr = gaussian(rng, n, n, 1.0).qr();
    let (q, r) = qr.unpack();
    // sign fix so the draw is Haar-distributed
    let signs = Vector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    q * Matrix::from_diagonal(&signs)
}

/// Random `(A, B)` of the requested kind.
///
/// `A` entries are `N(0, 1/n)` (spectral radius near one), `B` entries
/// `N(0, 1)`. The uncontrollable kind is block upper triangular in a random
/// orthogonal frame, with a controllable `(A11, B1)` of random size
/// `1..n-1` and a stable `A22` rescaled to a spectral radius in `[0.2, 0.9]`.
pub fn random_system(n: usize, m: usize, kind: SystemKind, seed: u64) -> Result<LtiSystem> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "random systems need n >= 1 and m >= 1, got n = {n}, m = {m}"
        )));
    }
    if kind == SystemKind::StabilizableUncontrollable && n < 2 {
        return Err(Error::InvalidArgument(
            "an uncontrollable system needs n >= 2".into(),
        ));
    }
    let tol = Tolerance::default();
    let mut r = rng::seeded(seed, rng::STREAM_SYSTEM);
    for _ in 0..RESAMPLE_CAP {
        let sys = match kind {
            SystemKind::Controllable => {
                let a = gaussian(&mut r, n, n, (1.0 / n as f64).sqrt());
                let b = gaussian(&mut r, n, m, 1.0);
                let sys = LtiSystem::new(a, b)?;
                if controllability_rank(&sys, &tol)? == n && controllable_subspace(&sys)?.dim() == n
                {
                    return Ok(sys);
                }
                continue;
            }
            SystemKind::StabilizableUncontrollable => {
                let nc = r.random_range(1..n);
                let nu = n - nc;
                let a11 = gaussian(&mut r, nc, nc, (1.0 / nc as f64).sqrt());
                let b1 = gaussian(&mut r, nc, m, 1.0);
                let a12 = gaussian(&mut r, nc, nu, (1.0 / n as f64).sqrt());
                let g = gaussian(&mut r, nu, nu, 1.0);
                let target: f64 = r.random_range(0.2..=0.9);
                let rho = matops::spectral_radius(&g)?;
                if rho < 1e-3 {
                    continue;
                }
                let a22 = g * (target / rho);
                let inner = LtiSystem::new(a11.clone(), b1.clone())?;
                if controllability_rank(&inner, &tol)? != nc {
                    continue;
                }
                let mut blk = Matrix::zeros(n, n);
                blk.view_mut((0, 0), (nc, nc)).copy_from(&a11);
                blk.view_mut((0, nc), (nc, nu)).copy_from(&a12);
                blk.view_mut((nc, nc), (nu, nu)).copy_from(&a22);
                let mut bblk = Matrix::zeros(n, m);
                bblk.view_mut((0, 0), (nc, m)).copy_from(&b1);
                let t = random_orthogonal(&mut r, n);
                LtiSystem::new(&t * blk * t.transpose(), &t * bblk)?
            }
        };
        if is_stabilizable(&sys)?
            && controllability_rank(&sys, &tol)? < n
            && controllable_subspace(&sys)?.dim() < n
        {
            return Ok(sys);
        }
    }
    Err(Error::ResampleCapExceeded(RESAMPLE_CAP))
}

/// How an initial state is chosen for a seeded trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Standard Gaussian draw.
    Generic,
    Zero,
    /// Gaussian draw inside the controllable subspace.
    Controllable,
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(Self::Generic),
            "zero" => Ok(Self::Zero),
            "controllable" => Ok(Self::Controllable),
            other => Err(Error::InvalidArgument(format!(
                "unknown initial state kind {other:?}"
            ))),
        }
    }
}

pub fn initial_state(sys: &LtiSystem, kind: InitialState, seed: u64) -> Result<Vector> {
    let mut r = rng::seeded(seed, rng::STREAM_INITIAL_STATE);
    Ok(match kind {
        InitialState::Generic => gaussian_vector(&mut r, sys.n()),
        InitialState::Zero => Vector::zeros(sys.n()),
        InitialState::Controllable => {
            let ctrl = controllable_subspace(sys)?;
            ctrl.basis() * gaussian_vector(&mut r, ctrl.dim())
        }
    })
}
