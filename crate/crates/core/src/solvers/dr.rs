use crate::avi::AviProblem;
use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::linalg::{lambda_min_sym, Lu};
use crate::qp::{FixedConstraintQp, QpFactor, QpStatus};
use crate::scalar::Scalar;

use super::{initial_point, Monitor, SolverConfig, SolverReport, Step};

/// A decomposition `M = M1 + M2` with `M1 = M1ᵀ ⪰ 0`, `M2 ≻ 0` (in the sense
/// of its symmetric part), and a metric `H = Hᵀ ≻ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Splitting<T> {
    pub m1: Mat<T>,
    pub m2: Mat<T>,
    pub h: Mat<T>,
}

impl<T: Scalar> Splitting<T> {
    /// Checks every condition against the target matrix `m`.
    pub fn validate(&self, m: &Mat<T>) -> Result<()> {
        let n = m.rows();
        for (name, a) in [("M1", &self.m1), ("M2", &self.m2), ("H", &self.h)] {
            if a.shape() != (n, n) {
                return Err(Error::InvalidSplitting(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    a.rows(),
                    a.cols()
                )));
            }
        }
        let scale = m.max_abs().max(T::one());
        // rounding of the sum is around epsilon, which for f32 exceeds 1e-12
        let sym_tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale;
        let sum = &self.m1 + &self.m2;
        if (&sum - m).max_abs() > sym_tol {
            return Err(Error::InvalidSplitting("M1 + M2 differs from M".into()));
        }
        if self.m1.asymmetry() > sym_tol {
            return Err(Error::InvalidSplitting("M1 is not symmetric".into()));
        }
        if lambda_min_sym(&self.m1.sym_part()) < T::lit(-1e-10) * scale {
            return Err(Error::InvalidSplitting("M1 is not positive semidefinite".into()));
        }
        let mu2 = lambda_min_sym(&self.m2.sym_part());
        if !(mu2 > T::zero()) {
            return Err(Error::InvalidSplitting(format!(
                "M2 is not positive definite (smallest eigenvalue of its symmetric part {:e})",
                mu2
            )));
        }
        if self.h.asymmetry() > sym_tol / scale * self.h.max_abs().max(T::one()) {
            return Err(Error::InvalidSplitting("H is not symmetric".into()));
        }
        if !(lambda_min_sym(&self.h) > T::zero()) {
            return Err(Error::InvalidSplitting("H is not positive definite".into()));
        }
        Ok(())
    }
}

/// `M1 = (M + Mᵀ)/4`, `M2 = M − M1`, `H = I`.
///
/// `M2 − M1` is then the skew part of `M`, and both `M1` and the symmetric
/// part of `M2` equal half the symmetric part of `M`, so the splitting is
/// valid exactly when `M + Mᵀ ≻ 0`.
pub fn make_dr_splitting<T: Scalar>(m: &Mat<T>) -> Result<Splitting<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("M must be square".into()));
    }
    let n = m.rows();
    let quarter = T::lit(0.25);
    let m1 = Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)]) * quarter);
    let m2 = m - &m1;
    let s = Splitting {
        m1,
        m2,
        h: Mat::identity(n),
    };
    s.validate(m)?;
    Ok(s)
}

/// The splitting iteration with all problem-independent work done once:
/// `H + M1` factored for the QP step, `H + M2` LU-factored for the affine step.
///
/// Reusable for every problem with the same `M` and constraint matrix `D`;
/// `q` and `d` may change between calls.
#[derive(Clone, Debug)]
pub struct DrSolver<T> {
    splitting: Splitting<T>,
    qp: FixedConstraintQp<T>,
    h_plus_m2: Lu<T>,
    m2_minus_h: Mat<T>,
    h_identity: bool,
}

impl<T: Scalar> DrSolver<T> {
    pub fn new(p: &AviProblem<T>, splitting: &Splitting<T>) -> Result<Self> {
        splitting.validate(&p.m)?;
        let h1 = (&splitting.h + &splitting.m1).sym_part();
        let factor = QpFactor::new(&h1).map_err(|_| {
            Error::InvalidSplitting("H + M1 is not positive definite".into())
        })?;
        let qp = FixedConstraintQp::new(factor, p.set.d_mat().clone())?;
        let h_plus_m2 = Lu::new(&(&splitting.h + &splitting.m2))
            .map_err(|_| Error::InvalidSplitting("H + M2 is singular".into()))?;
        Ok(DrSolver {
            m2_minus_h: &splitting.m2 - &splitting.h,
            h_identity: splitting.h == Mat::identity(p.dim()),
            splitting: splitting.clone(),
            qp,
            h_plus_m2,
        })
    }

    pub fn splitting(&self) -> &Splitting<T> {
        &self.splitting
    }

    /// Iterates
    ///
    /// ```text
    /// y^k     = argmin_{y ∈ C} ½ yᵀ(H + M1)y + (q + (M2 − H)u^k)ᵀ y
    /// u^{k+1} = (H + M2)⁻¹ (H(2λ_k y^k + (1 − 2λ_k)u^k) + M2 u^k)
    /// ```
    ///
    /// and stops on the natural residual at `y^k`, which is always feasible
    /// and is returned as the solution.
    pub fn solve(
        &self,
        p: &AviProblem<T>,
        cfg: &SolverConfig<T>,
        warm: Option<&[T]>,
    ) -> Result<SolverReport<T>> {
        if p.set.d_mat() != self.qp.d_mat() || p.m.shape() != self.m2_minus_h.shape() {
            return DrSolver::new(p, &self.splitting)?.solve(p, cfg, warm);
        }
        let mut mon = Monitor::new(p, cfg)?;
        let mut u = initial_point(p, warm)?;
        let mut y_prev: Option<Vec<T>> = None;
        let two = T::lit(2.0);
        let mut k = 0;
        loop {
            let mut c = self.m2_minus_h.matvec(&u);
            for (ci, &qi) in c.iter_mut().zip(&p.q) {
                *ci += qi;
            }
            let sol = self.qp.solve_on(&c, &p.set, &cfg.qp, y_prev.as_deref())?;
            if sol.status == QpStatus::Infeasible {
                return Err(Error::Infeasible);
            }
            let y = sol.y;
            if let Step::Stop(status) = mon.record(&y)? {
                return Ok(mon.finish(y, status));
            }
            let lam = cfg.relaxation.at(k);
            let mix: Vec<T> = y
                .iter()
                .zip(&u)
                .map(|(&yi, &ui)| two * lam * yi + (T::one() - two * lam) * ui)
                .collect();
            let mut rhs = if self.h_identity {
                mix
            } else {
                self.splitting.h.matvec(&mix)
            };
            for (r, v) in rhs.iter_mut().zip(self.splitting.m2.matvec(&u)) {
                *r += v;
            }
            u = self.h_plus_m2.solve(&rhs);
            y_prev = Some(y);
            k += 1;
        }
    }
}

/// One-shot splitting solve; see [`DrSolver::solve`].
pub fn dr_solve<T: Scalar>(
    p: &AviProblem<T>,
    s: &Splitting<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    DrSolver::new(p, s)?.solve(p, cfg, warm)
}
