use crate::avi::{monotonicity_constants, AviProblem};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{initial_point, Monitor, SolverConfig, SolverReport, Step};

/// Nesterov's dual extrapolation for strongly monotone problems.
///
/// With weights `λ_0 = 1`, `λ_{k+1} = (μ/L) Σ_{i≤k} λ_i` and `β = L`:
///
/// ```text
/// u^k     = argmax_{u ∈ C} Σ_{i≤k} λ_i [⟨F(y^i), y^i − u⟩ − (μ/2)‖u − y^i‖²]
///         = Π_C(ȳ − F̄/μ)              (λ-weighted averages of y^i, F(y^i))
/// y^{k+1} = argmax_{u ∈ C} ⟨F(u^k), u^k − u⟩ − (β/2)‖u − u^k‖²
///         = Π_C(u^k − F(u^k)/β)
/// ```
///
/// starting from `y^0` = the warm point. The residual is measured at `u^k`.
/// The averages are kept normalized; after the first term each new point
/// enters with the constant weight `(μ/L)/(1 + μ/L)`.
pub fn nagd_solve<T: Scalar>(
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
    let mu = mc.mu;
    let beta = mc.lipschitz;
    let ratio = mu / beta;
    let weight = ratio / (T::one() + ratio);
    let mut mon = Monitor::new(p, cfg)?;
    let mut y = initial_point(p, warm)?;
    let mut y_avg = y.clone();
    let mut f_avg = p.operator(&y);
    loop {
        let target: Vec<T> = y_avg
            .iter()
            .zip(&f_avg)
            .map(|(&a, &f)| a - f / mu)
            .collect();
        let u = mon.project(&target)?;
        if let Step::Stop(status) = mon.record(&u)? {
            return Ok(mon.finish(u, status));
        }
        let fu = p.operator(&u);
        let step: Vec<T> = u.iter().zip(&fu).map(|(&a, &f)| a - f / beta).collect();
        y = mon.project(&step)?;
        let fy = p.operator(&y);
        for (a, &v) in y_avg.iter_mut().zip(&y) {
            *a += weight * (v - *a);
        }
        for (a, &v) in f_avg.iter_mut().zip(&fy) {
            *a += weight * (v - *a);
        }
    }
}
