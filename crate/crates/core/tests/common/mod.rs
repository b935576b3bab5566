#![allow(dead_code)]

use minstab::lti::{self, InitialState};
use minstab::{LtiSystem, Matrix, OnlineDataset, SystemKind, Vector};
use rand::Rng;

/// Case `i` of the mixed ensemble: `n` in 1..=8, `m` in 1..=3, both system
/// kinds, and generic, zero and controllable-subspace initial states.
pub fn mixed_case(base: u64, i: usize) -> (LtiSystem, Vector) {
    let n = 1 + i % 8;
    let m = 1 + (i / 8) % 3;
    let kind = if i % 2 == 1 && n >= 2 {
        SystemKind::StabilizableUncontrollable
    } else {
        SystemKind::Controllable
    };
    let x0_kind = [
        InitialState::Generic,
        InitialState::Zero,
        InitialState::Controllable,
    ][(i / 2) % 3];
    let seed = base + i as u64;
    let sys = lti::random_system(n, m, kind, seed).unwrap();
    let x0 = lti::initial_state(&sys, x0_kind, seed).unwrap();
    (sys, x0)
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Least-norm solution of `Theta z_k = x_plus_k` over all triples, computed
/// without a pseudoinverse: keep a maximal independent subset `Z_S` of the
/// regressor columns by Gram-Schmidt, then
/// `Theta = X_plus_S (Z_S^T Z_S)^{-1} Z_S^T` with an LU solve.
pub fn least_norm_oracle(ds: &OnlineDataset) -> Matrix {
    let (n, m) = (ds.n(), ds.m());
    let mut kept: Vec<usize> = Vec::new();
    let mut ortho: Vec<Vector> = Vec::new();
    let cols: Vec<Vector> = ds
        .triples()
        .iter()
        .map(|t| Vector::from_iterator(n + m, t.x.iter().chain(t.u.iter()).copied()))
        .collect();
    for (k, z) in cols.iter().enumerate() {
        let norm = z.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = z / norm;
        for _ in 0..2 {
            for q in &ortho {
                r -= q * q.dot(&r);
            }
        }
        let rn = r.norm();
        if rn > 1e-8 {
            ortho.push(r / rn);
            kept.push(k);
        }
    }
    if kept.is_empty() {
        return Matrix::zeros(n, n + m);
    }
    let zs = Matrix::from_columns(&kept.iter().map(|&k| cols[k].clone()).collect::<Vec<_>>());
    let xs = Matrix::from_columns(
        &kept
            .iter()
            .map(|&k| ds.triples()[k].x_plus.clone())
            .collect::<Vec<_>>(),
    );
    let gram = zs.transpose() * &zs;
    let w = gram
        .lu()
        .solve(&zs.transpose())
        .expect("independent columns");
    xs * w
}
