mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{assert_kkt, face_minimum, mesh_bound, random_qp};
use tasksel::qp::{check_feasible, solve_qp, QpProblem, QpStatus};

#[test]
fn unconstrained_identity() {
    let p = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    let sol = solve_qp(&p).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert_eq!(sol.primal.unwrap(), DVector::zeros(2));
    assert_eq!(sol.duals.unwrap().len(), 0);
}

#[test]
fn random_qps_match_face_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..150 {
        let m = rng.gen_range(1..=3);
        let rows = rng.gen_range(0..=8);
        let (p, u0) = random_qp(&mut rng, m, rows, (0.2, 5.0), false);
        let sol = solve_qp(&p).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_kkt(&p, &sol);
        let f = p.objective(sol.primal.as_ref().unwrap());
        let g = face_minimum(&p);
        assert!((g - f).abs() <= 1e-6 * (1.0 + f.abs()), "solver {f} vs faces {g}");
        let mesh = mesh_bound(&p, &u0, 3.0, 15);
        assert!(mesh >= f - 1e-9, "mesh point {mesh} beat the solver {f}");
    }
}

#[test]
fn infeasible_problems_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let m = rng.gen_range(1..=3);
        // A half-space and its strictly shifted complement.
        let a = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let gap = rng.gen_range(0.01..1.0);
        let rows = DMatrix::from_fn(2, m, |i, j| if i == 0 { a[j] } else { -a[j] });
        let b = DVector::from_vec(vec![-gap, 0.0]);
        let p = QpProblem::new(DMatrix::identity(m, m), DVector::zeros(m), rows, b).unwrap();
        assert_eq!(solve_qp(&p).unwrap().status, QpStatus::Infeasible);
        let cert = check_feasible(&p).unwrap();
        assert!(!cert.feasible);
        assert!(cert.min_slack > 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, max_global_rejects: 4096, ..ProptestConfig::default() })]

    #[test]
    fn kkt_holds_on_every_solve(seed in any::<u64>(), m in 1usize..=3, rows in 0usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_qp(&mut rng, m, rows, (0.1, 10.0), false);
        let sol = solve_qp(&p).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        assert_kkt(&p, &sol);
    }

    #[test]
    fn row_scaling_rescales_multiplier(seed in any::<u64>(), m in 1usize..=3, rows in 1usize..=8, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_qp(&mut rng, m, rows, (0.1, 10.0), false);
        let k = rng.gen_range(0..rows);
        let base = solve_qp(&p).unwrap();
        // Multipliers are only unique when the active rows are independent.
        let active = DMatrix::from_fn(base.active_set.len(), m, |i, j| p.rows()[(base.active_set[i], j)]);
        prop_assume!(
            active.nrows() == 0
                || (active.nrows() <= m && active.clone().svd(false, false).rank(1e-9) == active.nrows())
        );
        let scaled = solve_qp(&p.with_scaled_row(k, c)).unwrap();
        let (u1, u2) = (base.primal.unwrap(), scaled.primal.unwrap());
        prop_assert!((&u1 - &u2).amax() <= 1e-8, "u moved by {:e}", (&u1 - &u2).amax());
        let (l1, l2) = (base.duals.unwrap(), scaled.duals.unwrap());
        prop_assert!((l2[k] - l1[k] / c).abs() <= 1e-8 * (1.0 + l1[k].abs()));
    }

    #[test]
    fn feasibility_agrees_with_solver(seed in any::<u64>(), m in 1usize..=3, rows in 0usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_qp(&mut rng, m, rows, (0.1, 10.0), false);
        let f = check_feasible(&p).unwrap();
        prop_assert!(f.feasible);
        let w = f.witness.unwrap();
        prop_assert!(p.slack(&w).iter().all(|&s| s >= -1e-8));
    }
}

