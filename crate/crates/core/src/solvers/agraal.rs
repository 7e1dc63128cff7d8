use crate::avi::{monotonicity_constants, AviProblem};
use crate::error::Result;
use crate::scalar::{dist2, Scalar};

use super::{initial_point, Monitor, SolverConfig, SolverReport, Step};

/// `λ_k = min{(β + β²)λ_{k−1}, ‖Δu‖² / (4β²λ_{k−2}‖ΔF‖²)}`; when the ratio is
/// undefined (no change in `F`) the first branch is taken.
pub(crate) fn adaptive_step<T: Scalar>(beta: T, prev: T, prev2: T, du2: T, df2: T) -> T {
    let growth = (beta + beta * beta) * prev;
    let denom = T::lit(4.0) * beta * beta * prev2 * df2;
    if denom > T::zero() {
        let ratio = du2 / denom;
        if ratio.is_finite() {
            return growth.min(ratio);
        }
    }
    growth
}

/// Adaptive golden ratio algorithm with `β = (√5 − 1)/2`:
///
/// ```text
/// y^k     = (1 − β)u^k + βy^{k−1}
/// u^{k+1} = Π_C(y^k − λ_k F(u^k))
/// ```
///
/// with `y^{−1} = u^0`, `λ_0 = λ_{−1} = 1/L` and the adaptive rule of
/// [`adaptive_step`] from `k = 1` on.
pub fn agraal_solve<T: Scalar>(
    p: &AviProblem<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    let beta = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let lip = monotonicity_constants(&p.m).lipschitz;
    let mut mon = Monitor::new(p, cfg)?;
    let mut u = initial_point(p, warm)?;
    let mut y = u.clone();
    let mut f = p.operator(&u);
    let mut u_prev: Vec<T> = Vec::new();
    let mut f_prev: Vec<T> = Vec::new();
    let (mut lam, mut lam_prev) = (T::one() / lip, T::one() / lip);
    let mut k = 0usize;
    loop {
        if k > 0 {
            let du = dist2(&u, &u_prev);
            let df = dist2(&f, &f_prev);
            let next = adaptive_step(beta, lam, lam_prev, du * du, df * df);
            lam_prev = lam;
            lam = next;
        }
        for (yi, &ui) in y.iter_mut().zip(&u) {
            *yi = (T::one() - beta) * ui + beta * *yi;
        }
        let target: Vec<T> = y.iter().zip(&f).map(|(&yi, &fi)| yi - lam * fi).collect();
        let next = mon.project(&target)?;
        u_prev = std::mem::replace(&mut u, next);
        if let Step::Stop(status) = mon.record(&u)? {
            return Ok(mon.finish(u, status));
        }
        f_prev = std::mem::replace(&mut f, p.operator(&u));
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avi::Polyhedron;
    use crate::blockmat::Mat;

    #[test]
    fn guard_takes_growth_branch() {
        let beta = (5f64.sqrt() - 1.0) / 2.0;
        assert_eq!(adaptive_step(beta, 0.3, 0.2, 0.0, 0.0), (beta + beta * beta) * 0.3);
        assert_eq!(adaptive_step(beta, 0.3, 0.2, 1.0, 0.0), (beta + beta * beta) * 0.3);
        let r = adaptive_step(beta, 10.0, 1.0, 1.0, 1.0);
        assert!((r - 1.0 / (4.0 * beta * beta)).abs() < 1e-15);
    }

    #[test]
    fn two_step_rollout() {
        // M = diag(1, 2), q = (−1, −1), L = 2, λ₀ = λ₋₁ = 1/2
        // u¹ = (1/2, 1/2); λ₁ = min{1/2, 0.5/(4β²·0.5·1.25)} = 1/2
        // y¹ = (1 − β)u¹, u² = y¹ − λ₁F(u¹) = y¹ + (1/4, 0)
        let beta = (5f64.sqrt() - 1.0) / 2.0;
        let p: AviProblem<f64> = AviProblem::new(
            Mat::from_diag(&[1.0, 2.0]),
            vec![-1.0, -1.0],
            Polyhedron::unconstrained(2),
        )
        .unwrap();
        let cfg = SolverConfig {
            record_iterates: true,
            max_iter: 2,
            ..SolverConfig::default()
        };
        let r = agraal_solve(&p, &cfg, None).unwrap();
        assert!((r.iterates[0][0] - 0.5).abs() < 1e-15);
        assert!((r.iterates[0][1] - 0.5).abs() < 1e-15);
        let y1 = (1.0 - beta) * 0.5;
        assert!((r.iterates[1][0] - (y1 + 0.25)).abs() < 1e-14);
        assert!((r.iterates[1][1] - y1).abs() < 1e-14);
    }

    #[test]
    fn warm_start_at_solution() {
        let p: AviProblem<f64> = AviProblem::new(Mat::scalar(1.0), vec![-1.0], Polyhedron::unconstrained(1)).unwrap();
        let r = agraal_solve(&p, &SolverConfig::default(), Some(&[1.0])).unwrap();
        assert_eq!(r.iterations, 1);
    }
}
