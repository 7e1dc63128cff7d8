use crate::avi::{monotonicity_constants, AviProblem};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{initial_point, Monitor, SolverConfig, SolverReport, Step};

fn positive_step<T: Scalar>(step: T) -> Result<T> {
    if step > T::zero() && step.is_finite() {
        Ok(step)
    } else {
        Err(Error::InvalidConfig(format!("stepsize {:e} must be positive", step)))
    }
}

fn gradient_step<T: Scalar>(u: &[T], f: &[T], step: T) -> Vec<T> {
    u.iter().zip(f).map(|(&ui, &fi)| ui - step * fi).collect()
}

/// Projected gradient: `u⁺ = Π_C(u − λF(u))`.
///
/// Requires strong monotonicity; the default step is `μ/L²`, half the upper
/// end of the admissible range `(0, 2μ/L²)`.
pub fn pgd_solve<T: Scalar>(
    p: &AviProblem<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    let mc = monotonicity_constants(&p.m);
    if !(mc.mu_raw > T::zero()) {
        return Err(Error::NotStronglyMonotone {
            mu: mc.mu_raw.to_f64_lossy(),
        });
    }
    let bound = T::lit(2.0) * mc.mu / (mc.lipschitz * mc.lipschitz);
    let step = cfg.step.unwrap_or(mc.mu / (mc.lipschitz * mc.lipschitz));
    if !(step > T::zero() && step < bound) {
        return Err(Error::InvalidConfig(format!(
            "PGD stepsize {:e} outside (0, {:e})",
            step, bound
        )));
    }
    let mut mon = Monitor::new(p, cfg)?;
    let mut u = initial_point(p, warm)?;
    loop {
        let v = gradient_step(&u, &p.operator(&u), step);
        u = mon.project(&v)?;
        if let Step::Stop(status) = mon.record(&u)? {
            return Ok(mon.finish(u, status));
        }
    }
}

/// Extragradient: `y = Π_C(u − λF(u))`, `u⁺ = Π_C(u − λF(y))`; default
/// step `0.9/L`.
pub fn exgd_solve<T: Scalar>(
    p: &AviProblem<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    let step = match cfg.step {
        Some(s) => positive_step(s)?,
        None => positive_step(T::lit(0.9) / monotonicity_constants(&p.m).lipschitz)?,
    };
    let mut mon = Monitor::new(p, cfg)?;
    let mut u = initial_point(p, warm)?;
    loop {
        let y = mon.project(&gradient_step(&u, &p.operator(&u), step))?;
        u = mon.project(&gradient_step(&u, &p.operator(&y), step))?;
        if let Step::Stop(status) = mon.record(&u)? {
            return Ok(mon.finish(u, status));
        }
    }
}

/// Projected reflected gradient: `u⁺ = Π_C(u − λF(2u − u⁻))` with
/// `u⁻ = u` on the first iteration; default step `0.9(√2 − 1)/L`.
pub fn prgd_solve<T: Scalar>(
    p: &AviProblem<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    let step = match cfg.step {
        Some(s) => positive_step(s)?,
        None => positive_step(
            T::lit(0.9) * (T::SQRT_2() - T::one()) / monotonicity_constants(&p.m).lipschitz,
        )?,
    };
    let mut mon = Monitor::new(p, cfg)?;
    let mut u = initial_point(p, warm)?;
    let mut u_prev = u.clone();
    let two = T::lit(2.0);
    loop {
        let reflected: Vec<T> = u
            .iter()
            .zip(&u_prev)
            .map(|(&a, &b)| two * a - b)
            .collect();
        let next = mon.project(&gradient_step(&u, &p.operator(&reflected), step))?;
        u_prev = std::mem::replace(&mut u, next);
        if let Step::Stop(status) = mon.record(&u)? {
            return Ok(mon.finish(u, status));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avi::Polyhedron;
    use crate::blockmat::Mat;
    use crate::solvers::SolverStatus;

    fn scalar_problem() -> AviProblem<f64> {
        AviProblem::new(Mat::scalar(1.0), vec![-1.0], Polyhedron::unconstrained(1)).unwrap()
    }

    fn iterates(r: &SolverReport<f64>) -> Vec<f64> {
        r.iterates.iter().map(|u| u[0]).collect()
    }

    fn recording(step: Option<f64>, max_iter: usize) -> SolverConfig<f64> {
        SolverConfig {
            step,
            max_iter,
            record_iterates: true,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn pgd_geometric_recursion() {
        let r = pgd_solve(&scalar_problem(), &recording(Some(0.5), 3), None).unwrap();
        assert_eq!(iterates(&r), vec![0.5, 0.75, 0.875]);
        assert_eq!(r.status, SolverStatus::IterLimit);
    }

    #[test]
    fn pgd_step_range_and_monotonicity_checks() {
        let p = scalar_problem();
        assert!(matches!(
            pgd_solve(&p, &recording(Some(2.0), 3), None),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            pgd_solve(&p, &recording(Some(0.0), 3), None),
            Err(Error::InvalidConfig(_))
        ));
        let skew = AviProblem::new(
            Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap(),
            vec![0.0, 0.0],
            Polyhedron::unconstrained(2),
        )
        .unwrap();
        assert!(matches!(
            pgd_solve(&skew, &SolverConfig::default(), None),
            Err(Error::NotStronglyMonotone { .. })
        ));
    }

    #[test]
    fn warm_start_at_solution_takes_one_iteration() {
        let p = scalar_problem();
        let cfg = SolverConfig::default();
        for r in [
            pgd_solve(&p, &cfg, Some(&[1.0])).unwrap(),
            exgd_solve(&p, &cfg, Some(&[1.0])).unwrap(),
            prgd_solve(&p, &cfg, Some(&[1.0])).unwrap(),
        ] {
            assert_eq!(r.iterations, 1);
            assert!(r.converged());
        }
    }

    #[test]
    fn exgd_two_step_rollout() {
        // y⁰ = 0 − 0.9(0 − 1) = 0.9, u¹ = 0 − 0.9(0.9 − 1) = 0.09
        // y¹ = 0.09 − 0.9(0.09 − 1) = 0.909, u² = 0.09 − 0.9(0.909 − 1) = 0.1719
        let r = exgd_solve(&scalar_problem(), &recording(Some(0.9), 2), None).unwrap();
        let it = iterates(&r);
        assert!((it[0] - 0.09).abs() < 1e-15);
        assert!((it[1] - 0.1719).abs() < 1e-15);
    }

    #[test]
    fn exgd_handles_pure_rotation() {
        let p: AviProblem<f64> = AviProblem::new(
            Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap(),
            vec![0.0, 0.0],
            Polyhedron::unconstrained(2),
        )
        .unwrap();
        let cfg = SolverConfig::default().with_tol(1e-8);
        let r = exgd_solve(&p, &cfg, Some(&[1.0, 1.0])).unwrap();
        assert!(r.converged());
        assert!(r.solution.iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn prgd_first_step_is_pgd_then_reflects() {
        // u¹ = 0 − 0.4(0 − 1) = 0.4; u² = 0.4 − 0.4(2·0.4 − 0 − 1) = 0.48
        let r = prgd_solve(&scalar_problem(), &recording(Some(0.4), 2), None).unwrap();
        let it = iterates(&r);
        assert!((it[0] - 0.4).abs() < 1e-15);
        assert!((it[1] - 0.48).abs() < 1e-15);
    }
}
