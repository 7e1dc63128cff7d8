use lqvi::avi::{monotonicity_constants, natural_residual, project};
use lqvi::blockmat::{build_gamma, build_theta};
use lqvi::qp::{solve_qp, FixedConstraintQp, QpFactor, QpProblem, QpSettings, QpStatus};
use lqvi::scenario::{random_avi, random_avi_with_witness};
use lqvi::solvers::{solve, Algorithm, SolverConfig};
use lqvi::{Mat64, Polyhedron64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// A random point projected onto the set.
fn feasible_point(set: &Polyhedron64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v = normal_vec(rng, set.dim());
    project(set, &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_nonexpansive_and_idempotent(seed in 0u64..10_000, n in 2usize..8, m in 1usize..6) {
        let p = random_avi::<f64>(n, m, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normal_vec(&mut rng, n);
        let b = normal_vec(&mut rng, n);
        let pa = project(&p.set, &a).unwrap();
        let pb = project(&p.set, &b).unwrap();
        prop_assert!(p.set.contains(&pa, 1e-9));
        prop_assert!(norm(&sub(&pa, &pb)) <= norm(&sub(&a, &b)) + 1e-9);
        let ppa = project(&p.set, &pa).unwrap();
        prop_assert!(norm(&sub(&ppa, &pa)) <= 1e-9);
        // obtuse angle condition against any feasible point
        let z = feasible_point(&p.set, &mut rng);
        prop_assert!(dot(&sub(&a, &pa), &sub(&z, &pa)) <= 1e-8);
    }

    #[test]
    fn monotonicity_constants_bound_the_operator(seed in 0u64..10_000, n in 1usize..10) {
        let p = random_avi::<f64>(n, 1, seed).unwrap();
        let c = monotonicity_constants(&p.m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..5 {
            let a = normal_vec(&mut rng, n);
            let b = normal_vec(&mut rng, n);
            let d = sub(&a, &b);
            let fd = sub(&p.operator(&a), &p.operator(&b));
            let dd = dot(&d, &d);
            prop_assert!(dot(&fd, &d) >= c.mu * dd - 1e-9 * dd);
            prop_assert!(norm(&fd) <= c.lipschitz * norm(&d) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn qp_solution_beats_feasible_points(seed in 0u64..10_000, n in 2usize..8, m in 1usize..8) {
        let w = random_avi_with_witness::<f64>(n, m, seed).unwrap();
        let hess = w.problem.m.sym_part();
        let qp = QpProblem { p: hess.clone(), c: w.problem.q.clone(), set: w.problem.set.clone() };
        let sol = solve_qp(&qp, &QpSettings::default(), None).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let obj = |y: &[f64]| 0.5 * dot(y, &hess.matvec(y)) + dot(&qp.c, y);
        let best = obj(&sol.y);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let z = feasible_point(&qp.set, &mut rng);
            prop_assert!(best <= obj(&z) + 1e-8 * (1.0 + obj(&z).abs()));
        }
        prop_assert!(sol.lambda.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn dual_and_primal_qp_paths_agree(seed in 0u64..10_000, n in 2usize..7) {
        // independent rows put the fixed-constraint solver on its dual path
        let m = n - 1;
        let w = random_avi_with_witness::<f64>(n, m, seed).unwrap();
        let hess = &w.problem.m.sym_part() + &Mat64::identity(n);
        let fixed = FixedConstraintQp::new(QpFactor::new(&hess).unwrap(), w.problem.set.d_mat().clone()).unwrap();
        prop_assert!(fixed.uses_dual());
        let a = fixed.solve(&w.problem.q, w.problem.set.d(), &QpSettings::default(), None).unwrap();
        let qp = QpProblem { p: hess, c: w.problem.q.clone(), set: w.problem.set.clone() };
        let b = solve_qp(&qp, &QpSettings::default(), None).unwrap();
        prop_assert!(norm(&sub(&a.y, &b.y)) <= 1e-7 * (1.0 + norm(&b.y)));
    }

    #[test]
    fn rollout_matches_stacked_prediction(seed in 0u64..10_000, n in 1usize..5, m in 1usize..3, t in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mat64::from_fn(n, n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let b = Mat64::from_fn(n, m, |_, _| rng.sample(StandardNormal));
        let x0 = normal_vec(&mut rng, n);
        let u = normal_vec(&mut rng, m * t);
        let mut x = x0.clone();
        let mut stacked = Vec::new();
        for s in 0..t {
            let bu = b.matvec(&u[s * m..(s + 1) * m]);
            x = a.matvec(&x).iter().zip(&bu).map(|(p, q)| p + q).collect();
            stacked.extend_from_slice(&x);
        }
        let theta = build_theta(&a, t).matvec(&x0);
        let gamma = build_gamma(&a, &b, t).matvec(&u);
        let predicted: Vec<f64> = theta.iter().zip(&gamma).map(|(p, q)| p + q).collect();
        prop_assert!(norm(&sub(&predicted, &stacked)) <= 1e-9 * (1.0 + norm(&stacked)));
    }
}

#[test]
fn dr_fixed_point_is_stationary() {
    let cfg = SolverConfig::default().with_tol(1e-11);
    for seed in 0..10 {
        let p = random_avi::<f64>(6, 4, seed).unwrap();
        let r = solve(Algorithm::Dr, &p, &cfg, None).unwrap();
        let again = solve(Algorithm::Dr, &p, &cfg.clone().with_max_iter(1), Some(&r.solution)).unwrap();
        assert!(norm(&sub(&again.solution, &r.solution)) <= 1e-8);
        assert!(natural_residual(&p, &r.solution, 1.0).unwrap() <= 1e-10);
    }
}

#[test]
fn reports_are_deterministic() {
    let p = random_avi::<f64>(30, 10, 3).unwrap();
    let cfg = SolverConfig::default().with_tol(1e-6);
    for algo in Algorithm::ALL {
        let a = solve(algo, &p, &cfg, None).unwrap();
        let b = solve(algo, &p, &cfg, None).unwrap();
        assert_eq!(a.solution, b.solution, "{algo}");
        assert_eq!(a.residuals, b.residuals, "{algo}");
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let p64 = random_avi::<f64>(8, 4, 11).unwrap();
    let p32 = random_avi::<f32>(8, 4, 11).unwrap();
    let r64 = solve(Algorithm::Dr, &p64, &SolverConfig::default().with_tol(1e-8), None).unwrap();
    let r32 = solve(Algorithm::Dr, &p32, &SolverConfig::default().with_tol(1e-4), None).unwrap();
    let gap = r64
        .solution
        .iter()
        .zip(&r32.solution)
        .map(|(a, &b)| (a - b as f64).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-3, "{gap}");
}

#[test]
fn every_start_reaches_the_same_solution() {
    let p = random_avi::<f64>(12, 6, 5).unwrap();
    let cfg = SolverConfig::default().with_tol(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = solve(Algorithm::Dr, &p, &cfg, None).unwrap().solution;
    for _ in 0..5 {
        let start = normal_vec(&mut rng, 12);
        let r = solve(Algorithm::Dr, &p, &cfg, Some(&start)).unwrap();
        assert!(norm(&sub(&r.solution, &base)) <= 1e-8);
    }
}
