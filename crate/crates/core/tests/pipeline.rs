mod common;

use common::{least_norm_oracle, mixed_case};
use minstab::explorer::{self, ExplorationReport};
use minstab::gain::{self, RiccatiConfig};
use minstab::identify::{self, Estimate};
use minstab::lti::{self, InitialState};
use minstab::{matops, pe, rng};
use minstab::{
    DataTriple, LtiSystem, Matrix, OnlineDataset, SimulatedPlant, SystemKind, Tolerance, Vector,
};
use proptest::prelude::*;

fn run(sys: &LtiSystem, x0: &Vector) -> ExplorationReport {
    let mut plant = SimulatedPlant::new(sys.clone(), None);
    explorer::explore(&mut plant, x0, sys.m(), &Tolerance::default()).unwrap()
}

fn states(ds: &OnlineDataset) -> Vec<Vector> {
    ds.triples().iter().map(|t| t.x.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn explorable_subspace_is_invariant_and_contains_generators(i in 0usize..5000) {
        let (sys, x0) = mixed_case(1, i);
        let tol = Tolerance::default();
        let v = lti::explorable_subspace(&sys, &x0).unwrap();
        prop_assert!(v.contains(&x0, &tol));
        for c in sys.b().column_iter() {
            prop_assert!(v.contains(&c.into_owned(), &tol));
        }
        for q in v.columns() {
            prop_assert!(v.contains(&(sys.a() * q), &tol));
        }
        // a deeper Krylov matrix spans nothing new
        let deep = lti::reachability_matrix(&sys, 2 * sys.n()).unwrap();
        let mut cols: Vec<Vector> = deep.column_iter().map(|c| c.into_owned()).collect();
        let mut p = x0.clone();
        for _ in 0..2 * sys.n() {
            cols.push(p.clone());
            p = sys.a() * p;
        }
        let r = matops::orthonormal_basis(sys.n(), &cols, &tol).unwrap().ncols();
        prop_assert_eq!(r, v.dim());
    }

    #[test]
    fn controllable_systems_explore_everything(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=3) {
        let sys = lti::random_system(n, m, SystemKind::Controllable, seed).unwrap();
        let x0 = lti::initial_state(&sys, InitialState::Generic, seed).unwrap();
        prop_assert_eq!(lti::explorable_subspace(&sys, &x0).unwrap().dim(), n);
        prop_assert_eq!(run(&sys, &x0).steps, n + m);
    }

    #[test]
    fn exploration_invariants(i in 0usize..5000) {
        let (sys, x0) = mixed_case(2, i);
        let tol = Tolerance::default();
        let v = lti::explorable_subspace(&sys, &x0).unwrap();
        let rep = run(&sys, &x0);
        let ds = &rep.dataset;
        prop_assert_eq!(rep.steps, v.dim() + sys.m());
        prop_assert_eq!(rep.excitation_times.len(), sys.m());
        prop_assert!(rep.excitation_times.iter().enumerate().all(|(j, &(_, c))| c == j));

        for k in 0..=ds.len() {
            prop_assert_eq!(identify::constraint_rank(&ds.prefix(k), &tol).unwrap(), k);
        }
        for k in 1..ds.len() {
            prop_assert!(!explorer::exploration_complete(&ds.prefix(k), &tol).unwrap());
            let u_next = &ds.triples()[k].u;
            prop_assert!(explorer::input_informative(&ds.prefix(k), u_next, &tol).unwrap());
        }
        prop_assert!(explorer::exploration_complete(ds, &tol).unwrap());

        // the zero-input states form a basis of V_exp
        let free: Vec<Vector> = ds.triples().iter().filter(|t| t.u.iter().all(|&x| x == 0.0)).map(|t| t.x.clone()).collect();
        prop_assert_eq!(free.len(), v.dim());
        let all = states(ds);
        let span = matops::orthonormal_basis(sys.n(), &all, &tol).unwrap();
        prop_assert_eq!(span.ncols(), v.dim());
        for s in &all {
            prop_assert!(v.contains(s, &tol));
        }

        // replaying the recorded inputs reproduces the states
        let mut x = x0.clone();
        for t in ds.triples() {
            prop_assert!((&t.x - &x).norm() == 0.0);
            x = lti::step(&sys, &x, &t.u, None).unwrap();
            prop_assert!((&t.x_plus - &x).norm() == 0.0);
        }
    }

    #[test]
    fn pseudo_estimate_agrees_on_explorable_directions(i in 0usize..5000, coef_seed in any::<u64>()) {
        let (sys, x0) = mixed_case(3, i);
        let tol = Tolerance::default();
        let v = lti::explorable_subspace(&sys, &x0).unwrap();
        let est = identify::pseudo_estimate(&run(&sys, &x0).dataset, &tol).unwrap().estimate;
        let mut r = rng::seeded(coef_seed, rng::STREAM_SIGNAL);
        let w = v.basis() * lti::gaussian_vector(&mut r, v.dim());
        let u = lti::gaussian_vector(&mut r, sys.m());
        let diff = (&est.a_hat * &w + &est.b_hat * &u) - (sys.a() * &w + sys.b() * &u);
        prop_assert!(diff.norm() <= 1e-6);

        let blocks = identify::frame_blocks(&est.a_hat, &est.b_hat, &v);
        let off = blocks.a12.norm() + blocks.a21.norm() + blocks.a22.norm() + blocks.b2.norm();
        prop_assert!(off <= 1e-7);
    }

    #[test]
    fn pseudo_estimate_is_orthogonally_equivariant(i in 0usize..5000, t_seed in any::<u64>()) {
        let (sys, x0) = mixed_case(4, i);
        let tol = Tolerance::default();
        let ds = run(&sys, &x0).dataset;
        let n = sys.n();
        let mut r = rng::seeded(t_seed, rng::STREAM_SIGNAL);
        let q = Matrix::from_fn(n, n, |_, _| {
            use rand::Rng;
            r.random_range(-1.0..1.0)
        })
        .qr()
        .q();
        let moved: Vec<DataTriple> = ds
            .triples()
            .iter()
            .map(|t| DataTriple { x_plus: &q * &t.x_plus, x: &q * &t.x, u: t.u.clone() })
            .collect();
        let moved = OnlineDataset::from_triples(n, sys.m(), moved).unwrap();
        let e0 = identify::pseudo_estimate(&ds, &tol).unwrap().estimate;
        let e1 = identify::pseudo_estimate(&moved, &tol).unwrap().estimate;
        prop_assert!((&e1.a_hat - &q * &e0.a_hat * q.transpose()).norm() <= 1e-7);
        prop_assert!((&e1.b_hat - &q * &e0.b_hat).norm() <= 1e-7);
    }

    #[test]
    fn pseudo_estimate_matches_least_norm_oracle(i in 0usize..5000) {
        let (sys, x0) = mixed_case(5, i);
        prop_assume!(sys.n() + sys.m() <= 6);
        let ds = run(&sys, &x0).dataset;
        let est = identify::pseudo_estimate(&ds, &Tolerance::default()).unwrap().estimate;
        let theta = least_norm_oracle(&ds);
        let oracle = Estimate::new(theta.columns(0, sys.n()).into_owned(), theta.columns(sys.n(), sys.m()).into_owned()).unwrap();
        prop_assert!((&est.a_hat - &oracle.a_hat).norm() + (&est.b_hat - &oracle.b_hat).norm() <= 1e-6);
    }

    #[test]
    fn gain_stabilizes_truth_for_uncontrollable_systems(seed in any::<u64>(), n in 2usize..=8, m in 1usize..=3) {
        let tol = Tolerance::default();
        let sys = lti::random_system(n, m, SystemKind::StabilizableUncontrollable, seed).unwrap();
        let x0 = lti::initial_state(&sys, InitialState::Controllable, seed).unwrap();
        let est = identify::pseudo_estimate(&run(&sys, &x0).dataset, &tol).unwrap().estimate;
        let cfg = RiccatiConfig::default();
        let g = gain::synthesize(&est, &cfg).unwrap();
        prop_assert!(g.closed_loop_radius_est < 1.0);
        prop_assert!(gain::certify(&sys, &g.k).unwrap() < 1.0);
        prop_assert!(g.riccati_residual <= 10.0 * cfg.tol);
    }

    #[test]
    fn riccati_solution_is_symmetric_and_settled(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=3) {
        let sys = lti::random_system(n, m, SystemKind::Controllable, seed).unwrap();
        let cfg = RiccatiConfig::default();
        let sol = gain::solve_dare(sys.a(), sys.b(), &cfg).unwrap();
        prop_assert!((&sol.p - sol.p.transpose()).norm() <= 1e-9);
        prop_assert!(sol.residual <= 10.0 * cfg.tol);
        prop_assert!(sol.p.clone().symmetric_eigenvalues().min() >= 1.0 - 1e-9);
    }

    #[test]
    fn hankel_entries_are_shifted_samples(seed in any::<u64>(), m in 1usize..=3, depth in 1usize..=5, extra in 0usize..=6) {
        let len = depth + extra;
        let sig = pe::InputSignal::gaussian(m, len, seed);
        let h = pe::hankel(&sig, depth).unwrap();
        prop_assert_eq!(h.matrix.nrows(), depth * m);
        prop_assert_eq!(h.matrix.ncols(), len + 1 - depth);
        for i in 0..depth {
            for j in 0..h.matrix.ncols() {
                for c in 0..m {
                    prop_assert_eq!(h.matrix[(i * m + c, j)], sig.samples()[i + j][c]);
                }
            }
        }
    }

    #[test]
    fn pe_order_is_monotone(seed in any::<u64>(), m in 1usize..=3, depth in 2usize..=5) {
        let sig = pe::make_pe_signal(m, depth, seed).unwrap();
        let tol = Tolerance::default();
        prop_assert!(pe::is_pe(&sig, depth, &tol).unwrap());
        for l in 1..depth {
            prop_assert!(pe::is_pe(&sig, l, &tol).unwrap());
        }
        prop_assert!(sig.len() >= depth * (m + 1) - 1);
    }
}

#[test]
fn stabilization_transfer_over_many_seeds() {
    let tol = Tolerance::default();
    let cfg = RiccatiConfig::default();
    for seed in 0..500u64 {
        let n = 2 + (seed as usize) % 6;
        let m = 1 + (seed as usize / 6) % 2;
        let sys = lti::random_system(n, m, SystemKind::StabilizableUncontrollable, seed).unwrap();
        let x0 = lti::initial_state(&sys, InitialState::Generic, seed).unwrap();
        let est = identify::pseudo_estimate(&run(&sys, &x0).dataset, &tol)
            .unwrap()
            .estimate;
        let g = gain::synthesize(&est, &cfg).unwrap();
        assert!(gain::certify(&sys, &g.k).unwrap() < 1.0, "seed {seed}");
    }
}
