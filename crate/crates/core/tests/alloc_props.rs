use edgesel::alloc::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn costs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e3, 1..=12)
}

proptest! {
    #[test]
    fn feasible_and_stationary(c in costs()) {
        let p = AllocationProblem::new(c.clone()).unwrap();
        let a = solve_analytic(&p).unwrap();
        prop_assert!((a.betas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.betas.iter().all(|&b| b >= p.min_beta && b <= 1.0));
        // KKT: c_i / β_i² is common to every unclamped device.
        let free: Vec<f64> = c.iter().zip(&a.betas).filter(|(_, b)| **b > p.min_beta * 1.000001).map(|(c, b)| c / (b * b)).collect();
        if let Some(first) = free.first() {
            prop_assert!(free.iter().all(|m| (m - first).abs() <= 1e-9 * first));
        }
    }

    #[test]
    fn sqp_matches_analytic(c in costs()) {
        let p = AllocationProblem::new(c).unwrap();
        let a = solve_analytic(&p).unwrap();
        let s = solve_sqp(&p, 1e-12, 200).unwrap();
        prop_assert!((s.objective_value - a.objective_value).abs() <= 1e-6 * a.objective_value);
    }

    #[test]
    fn scale_invariant(c in costs(), lambda in 1e-3f64..1e3) {
        let a = solve_analytic(&AllocationProblem::new(c.clone()).unwrap()).unwrap();
        let b = solve_analytic(&AllocationProblem::new(c.iter().map(|x| x * lambda).collect()).unwrap()).unwrap();
        for (x, y) in a.betas.iter().zip(&b.betas) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn costlier_device_gets_more_band(c in prop::collection::vec(1e-2f64..1e2, 2..=12), i in 0usize..12, bump in 1.01f64..10.0) {
        let i = i % c.len();
        let a = solve_analytic(&AllocationProblem::new(c.clone()).unwrap()).unwrap();
        let mut c2 = c.clone();
        c2[i] *= bump;
        let b = solve_analytic(&AllocationProblem::new(c2).unwrap()).unwrap();
        prop_assert!(b.betas[i] >= a.betas[i]);
        for j in (0..c.len()).filter(|&j| j != i) {
            prop_assert!(b.betas[j] <= a.betas[j] + 1e-15);
        }
    }
}

#[test]
fn beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
        let p = AllocationProblem::new(c).unwrap();
        let best = solve_analytic(&p).unwrap().objective_value;
        for _ in 0..200 {
            let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = w.iter().sum();
            let b: Vec<f64> = w.iter().map(|x| x / s).collect();
            assert!(p.objective(&b) >= best * (1.0 - 1e-12));
        }
    }
}

#[test]
fn solver_choice_dispatches() {
    let p = AllocationProblem::new(vec![1.0, 4.0]).unwrap();
    for kind in [SolverKind::Analytic, SolverKind::Sqp] {
        let a = solve(&p, kind, 1e-12, 100).unwrap();
        assert_eq!(a.solver, kind);
        assert!((a.objective_value - 9.0).abs() < 1e-9);
    }
}
