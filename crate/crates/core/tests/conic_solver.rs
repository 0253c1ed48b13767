mod common;

use common::gaussian;
use ddd_lqr_lab::conic::{solve, LmiBlock, LmiProblem, SolveSettings, SolveStatus};
use ddd_lqr_lab::linalg;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `min t  s.t.  t I - M >= 0`.
fn lambda_max_problem(m: &DMatrix<f64>) -> LmiProblem {
    let n = m.nrows();
    let mut p = LmiProblem::new(1);
    p.set_objective(0, 1.0);
    let mut b = LmiBlock::new(n);
    for i in 0..n {
        b.add_term(0, i, i, 1.0);
        for j in i..n {
            b.add_constant(i, j, -m[(i, j)]);
        }
    }
    p.add_block(b);
    p
}

/// `max sum_ij C_ij X_ij  s.t.  diag X = 1, X >= 0`, written over the
/// off-diagonal entries of `X`.
fn max_cut_relaxation(c: &DMatrix<f64>) -> (LmiProblem, Vec<(usize, usize)>) {
    let n = c.nrows();
    let pairs: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut p = LmiProblem::new(pairs.len());
    let mut b = LmiBlock::new(n);
    for i in 0..n {
        b.add_constant(i, i, 1.0);
    }
    for (v, &(i, j)) in pairs.iter().enumerate() {
        b.add_term(v, i, j, 1.0);
        p.set_objective(v, -2.0 * c[(i, j)]);
    }
    p.add_block(b);
    (p, pairs)
}

#[test]
fn two_by_two_max_cut_has_closed_form() {
    // the optimum puts x = -sign(c)
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.7, 0.0]);
    let (p, _) = max_cut_relaxation(&c);
    let r = solve(&p, &SolveSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.z[0] - 1.0).abs() < 1e-6, "{}", r.z[0]);
    assert!((r.objective_value + 1.4).abs() < 1e-6);
}

#[test]
fn unbounded_objective_is_dual_infeasible() {
    // min -x  s.t.  x >= 0
    let mut p = LmiProblem::new(1);
    p.set_objective(0, -1.0);
    let mut b = LmiBlock::new(1);
    b.add_term(0, 0, 0, 1.0);
    p.add_block(b);
    let r = solve(&p, &SolveSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::DualInfeasible);
}

#[test]
fn conflicting_blocks_are_primal_infeasible() {
    let mut p = LmiProblem::new(1);
    let mut b1 = LmiBlock::new(1);
    b1.add_term(0, 0, 0, 1.0);
    b1.add_constant(0, 0, -2.0);
    let mut b2 = LmiBlock::new(1);
    b2.add_term(0, 0, 0, -1.0);
    b2.add_constant(0, 0, 1.0);
    p.add_block(b1);
    p.add_block(b2);
    p.set_objective(0, 1.0);
    let r = solve(&p, &SolveSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::PrimalInfeasible);
}

#[test]
fn unused_zero_cost_variable_is_eliminated() {
    let p = lambda_max_problem(&DMatrix::identity(2, 2));
    let mut wider = LmiProblem::new(2);
    wider.set_objective(0, 1.0);
    for b in p.blocks() {
        wider.add_block(b.clone());
    }
    let r = solve(&wider, &SolveSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.z[0] - 1.0).abs() < 1e-6);
    assert_eq!(r.z[1], 0.0);
    assert_eq!(r.eliminated_vars, 1);
}

#[test]
fn json_round_trip_preserves_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = gaussian(&mut rng, 4, 4, 1.0);
    let p = lambda_max_problem(&linalg::symmetrize(&g));
    let back = LmiProblem::from_json(&p.to_json().unwrap()).unwrap();
    let s = SolveSettings::default();
    let (a, b) = (solve(&p, &s).unwrap(), solve(&back, &s).unwrap());
    assert_eq!(a.z, b.z);
}

#[test]
fn malformed_json_is_an_error() {
    assert!(LmiProblem::from_json("{\"num_vars\": 1}").is_err());
    assert!(LmiProblem::from_json("not json").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lambda_max_matches_eigen_decomposition(seed in 0u64..100_000, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = linalg::symmetrize(&gaussian(&mut rng, n, n, 2.0));
        let r = solve(&lambda_max_problem(&m), &SolveSettings::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let lam = linalg::max_eigenvalue(&m);
        prop_assert!((r.z[0] - lam).abs() <= 1e-6 * lam.abs().max(1.0), "{} vs {}", r.z[0], lam);
    }

    #[test]
    fn max_cut_certificate_is_consistent(seed in 0u64..100_000, n in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = linalg::symmetrize(&gaussian(&mut rng, n, n, 1.0));
        let (p, pairs) = max_cut_relaxation(&c);
        let r = solve(&p, &SolveSettings::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!(r.gap <= 1e-7);
        prop_assert!(r.feas >= -1e-7);
        prop_assert!((r.objective_value - r.dual_objective).abs() <= 1e-6 * r.objective_value.abs().max(1.0));
        // entries of a correlation matrix lie in [-1, 1]
        for (v, _) in pairs.iter().enumerate() {
            prop_assert!(r.z[v].abs() <= 1.0 + 1e-6);
        }
        prop_assert!(p.block_min_eigenvalues(&r.z).iter().all(|&e| e >= -1e-7));
    }
}
