//! Strictly convex quadratic programs over polyhedra,
//!
//! ```text
//! minimize ½ yᵀ P y + cᵀ y   subject to   D y + d ≤ 0,
//! ```
//!
//! solved by the Goldfarb–Idnani dual active-set method. The method starts
//! from the unconstrained minimizer and adds violated constraints one at a
//! time while keeping the multipliers of the working set nonnegative, so every
//! intermediate point is dual feasible. A constraint that is violated but
//! cannot be added by any primal or dual step certifies that the polyhedron
//! is empty (the dual is unbounded along that direction).
//!
//! `P` is factored once in [`QpFactor`]; repeated solves with the same Hessian
//! (the Douglas–Rachford step, projections) only pay for the active-set work.
//! A warm point seeds the initial working set with the constraints active at
//! that point.

use serde::{Deserialize, Serialize};

use crate::avi::Polyhedron;
use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::{dot, norm2, norm_inf, Scalar};

pub const DEFAULT_QP_TOL: f64 = 1e-8;
pub const DEFAULT_QP_MAX_ITER: usize = 50_000;

#[derive(Clone, Debug)]
pub struct QpProblem<T> {
    pub p: Mat<T>,
    pub c: Vec<T>,
    pub set: Polyhedron<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterLimit,
}

#[derive(Clone, Debug)]
pub struct QpSolution<T> {
    pub y: Vec<T>,
    /// Multipliers of `D y + d ≤ 0`, one per row, all nonnegative.
    pub lambda: Vec<T>,
    /// `max(‖P y + c + Dᵀλ‖∞, max(D y + d)₊, |λᵀ(D y + d)|)`.
    pub kkt_residual: T,
    pub status: QpStatus,
    /// Number of active-set changes.
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QpSettings<T> {
    /// KKT tolerance, relative to `max(1, ‖c‖∞, ‖d‖∞)`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for QpSettings<T> {
    fn default() -> Self {
        QpSettings {
            tol: T::lit(DEFAULT_QP_TOL),
            max_iter: DEFAULT_QP_MAX_ITER,
        }
    }
}

/// A factored Hessian, reusable across solves.
#[derive(Clone, Debug)]
pub struct QpFactor<T> {
    n: usize,
    hess: Mat<T>,
    /// Columns of `L⁻ᵀ`, stored contiguously (column `k` at `k*n..(k+1)*n`).
    j0: Vec<T>,
    identity: bool,
}

impl<T: Scalar> QpFactor<T> {
    pub fn new(p: &Mat<T>) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::DimensionMismatch("QP Hessian must be square".into()));
        }
        let n = p.rows();
        let scale = p.max_abs().max(T::one());
        if p.asymmetry() > T::lit(1e-12) * scale {
            return Err(Error::InvalidConfig("QP Hessian is not symmetric".into()));
        }
        let chol = Cholesky::new(p)?;
        let jt = chol.inv_lt().transpose();
        Ok(QpFactor {
            n,
            hess: p.clone(),
            j0: jt.into_vec(),
            identity: false,
        })
    }

    /// Factor of the identity, used for Euclidean projections.
    pub fn identity(n: usize) -> Self {
        let mut j0 = vec![T::zero(); n * n];
        for k in 0..n {
            j0[k * n + k] = T::one();
        }
        QpFactor {
            n,
            hess: Mat::identity(n),
            j0,
            identity: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hessian(&self) -> &Mat<T> {
        &self.hess
    }

    /// `P⁻¹ v = J Jᵀ v`
    pub fn inv_hess_mul(&self, v: &[T]) -> Vec<T> {
        if self.identity {
            return v.to_vec();
        }
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for k in 0..n {
            let col = &self.j0[k * n..(k + 1) * n];
            let d = dot(col, v);
            for (o, &jv) in out.iter_mut().zip(col) {
                *o += d * jv;
            }
        }
        out
    }

    fn hess_mul(&self, y: &[T]) -> Vec<T> {
        if self.identity {
            y.to_vec()
        } else {
            self.hess.matvec(y)
        }
    }

    /// Minimizes `½ yᵀPy + cᵀy` over `set`.
    pub fn solve(
        &self,
        c: &[T],
        set: &Polyhedron<T>,
        settings: &QpSettings<T>,
        warm: Option<&[T]>,
    ) -> Result<QpSolution<T>> {
        if c.len() != self.n || set.dim() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "QP of size {} with linear term {} and constraint width {}",
                self.n,
                c.len(),
                set.dim()
            )));
        }
        let mut ws = Workspace::new(self, c, set);
        let mut iterations = 0usize;
        if let Some(w) = warm {
            if w.len() == self.n && !ws.seed_from(w, &mut iterations) {
                ws = Workspace::new(self, c, set);
            }
        }
        let outcome = ws.run(settings.max_iter, &mut iterations);
        let status = match outcome {
            Outcome::Done => QpStatus::Optimal,
            Outcome::Infeasible => QpStatus::Infeasible,
            Outcome::IterLimit => QpStatus::IterLimit,
        };
        let mut lambda = vec![T::zero(); set.n_constraints()];
        for (&j, &u) in ws.active.iter().zip(&ws.u) {
            lambda[j] = u.max(T::zero());
        }
        let y = ws.x;
        let kkt = kkt_residual(self, c, set, &y, &lambda);
        let scale = T::one().max(norm_inf(c)).max(norm_inf(set.d()));
        let status = match status {
            QpStatus::Optimal if !(kkt <= settings.tol * scale) => QpStatus::IterLimit,
            s => s,
        };
        Ok(QpSolution {
            y,
            lambda,
            kkt_residual: kkt,
            status,
            iterations,
        })
    }
}

/// A QP family with fixed Hessian and fixed constraint matrix `D`, where
/// only the linear term `c` and the offsets `d` change between solves.
///
/// When `D` has full row rank the problem is solved through its dual, a
/// nonnegativity-constrained QP in as many variables as there are
/// constraints, using the precomputed Gram matrix `D P⁻¹ Dᵀ`. This is much
/// cheaper than the primal method when the constraints are few compared to
/// the dimension. Otherwise (or if the dual answer fails the KKT check) the
/// primal method is used.
#[derive(Clone, Debug)]
pub struct FixedConstraintQp<T> {
    factor: QpFactor<T>,
    d_mat: Mat<T>,
    dual: Option<DualData<T>>,
}

#[derive(Clone, Debug)]
struct DualData<T> {
    /// `P⁻¹ Dᵀ`, stored transposed (row `j` is `P⁻¹ D_jᵀ`).
    zt: Mat<T>,
    gram: QpFactor<T>,
    nonneg: Polyhedron<T>,
}

impl<T: Scalar> FixedConstraintQp<T> {
    pub fn new(factor: QpFactor<T>, d_mat: Mat<T>) -> Result<Self> {
        if d_mat.cols() != factor.dim() {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix has {} columns for a QP of size {}",
                d_mat.cols(),
                factor.dim()
            )));
        }
        let m = d_mat.rows();
        let dual = if m > 0 && m <= factor.dim() {
            let mut zt = Mat::zeros(m, factor.dim());
            for j in 0..m {
                let z = factor.inv_hess_mul(d_mat.row(j));
                zt.row_mut(j).copy_from_slice(&z);
            }
            let gram = Mat::from_fn(m, m, |i, j| dot(d_mat.row(i), zt.row(j))).sym_part();
            let max_diag = gram.diag().into_iter().fold(T::zero(), |a, b| a.max(b));
            match Cholesky::new(&gram) {
                Ok(ch)
                    if ch
                        .l()
                        .diag()
                        .into_iter()
                        .all(|v| v * v > T::lit(1e-10) * max_diag) =>
                {
                    let mut neg = Mat::zeros(m, m);
                    for i in 0..m {
                        neg[(i, i)] = -T::one();
                    }
                    Some(DualData {
                        zt,
                        gram: QpFactor::new(&gram)?,
                        nonneg: Polyhedron::new(neg, vec![T::zero(); m])?,
                    })
                }
                _ => None,
            }
        } else {
            None
        };
        Ok(FixedConstraintQp {
            factor,
            d_mat,
            dual,
        })
    }

    pub fn factor(&self) -> &QpFactor<T> {
        &self.factor
    }

    pub fn d_mat(&self) -> &Mat<T> {
        &self.d_mat
    }

    pub fn uses_dual(&self) -> bool {
        self.dual.is_some()
    }

    pub fn solve(
        &self,
        c: &[T],
        d: &[T],
        settings: &QpSettings<T>,
        warm: Option<&[T]>,
    ) -> Result<QpSolution<T>> {
        let set = Polyhedron::new(self.d_mat.clone(), d.to_vec())?;
        self.solve_on(c, &set, settings, warm)
    }

    /// Like [`solve`](Self::solve) with the offsets taken from `set`, whose
    /// matrix must equal the one given at construction.
    pub fn solve_on(
        &self,
        c: &[T],
        set: &Polyhedron<T>,
        settings: &QpSettings<T>,
        warm: Option<&[T]>,
    ) -> Result<QpSolution<T>> {
        debug_assert_eq!(set.d_mat().shape(), self.d_mat.shape());
        if let Some(dual) = &self.dual {
            if c.len() != self.factor.dim() {
                return Err(Error::DimensionMismatch("QP linear term".into()));
            }
            // y(λ) = -P⁻¹c - Zλ ; dual: min ½λᵀGλ + λᵀ(D P⁻¹ c - d), λ ≥ 0
            let y0: Vec<T> = self.factor.inv_hess_mul(c).into_iter().map(|v| -v).collect();
            let b: Vec<T> = (0..set.n_constraints())
                .map(|j| -dot(set.d_mat().row(j), &y0) - set.d()[j])
                .collect();
            let dsol = dual
                .gram
                .solve(&b, &dual.nonneg, &QpSettings::default(), None)?;
            if dsol.status == QpStatus::Optimal {
                let lambda: Vec<T> = dsol.y.iter().map(|&v| v.max(T::zero())).collect();
                let mut y = y0;
                let zl = dual.zt.tr_matvec(&lambda);
                for (yi, v) in y.iter_mut().zip(zl) {
                    *yi -= v;
                }
                let kkt = kkt_residual(&self.factor, c, set, &y, &lambda);
                let scale = T::one().max(norm_inf(c)).max(norm_inf(set.d()));
                if kkt <= settings.tol * scale {
                    return Ok(QpSolution {
                        y,
                        lambda,
                        kkt_residual: kkt,
                        status: QpStatus::Optimal,
                        iterations: dsol.iterations,
                    });
                }
            }
        }
        self.factor.solve(c, set, settings, warm)
    }
}

/// One-shot convenience wrapper: factors `P` and solves.
pub fn solve_qp<T: Scalar>(
    problem: &QpProblem<T>,
    settings: &QpSettings<T>,
    warm: Option<&[T]>,
) -> Result<QpSolution<T>> {
    let lambda_min = crate::linalg::lambda_min_sym(&problem.p);
    if !(lambda_min > T::zero()) {
        return Err(Error::NotPositiveDefinite);
    }
    QpFactor::new(&problem.p)?.solve(&problem.c, &problem.set, settings, warm)
}

fn kkt_residual<T: Scalar>(
    f: &QpFactor<T>,
    c: &[T],
    set: &Polyhedron<T>,
    y: &[T],
    lambda: &[T],
) -> T {
    let mut stat = f.hess_mul(y);
    for (s, &ci) in stat.iter_mut().zip(c) {
        *s += ci;
    }
    let dl = set.d_mat().tr_matvec(lambda);
    for (s, v) in stat.iter_mut().zip(dl) {
        *s += v;
    }
    let g = set.eval(y);
    let primal = g.iter().fold(T::zero(), |m, &v| m.max(v));
    let compl = dot(lambda, &g).abs();
    norm_inf(&stat).max(primal).max(compl)
}

enum Outcome {
    Done,
    Infeasible,
    IterLimit,
}

struct Workspace<'a, T> {
    n: usize,
    set: &'a Polyhedron<T>,
    row_norms: Vec<T>,
    x: Vec<T>,
    j: Vec<T>,
    /// Columns of the triangular factor; column `k` holds rows `0..=k`.
    r: Vec<Vec<T>>,
    active: Vec<usize>,
    u: Vec<T>,
    is_active: Vec<bool>,
}

impl<'a, T: Scalar> Workspace<'a, T> {
    fn new(f: &QpFactor<T>, c: &[T], set: &'a Polyhedron<T>) -> Self {
        let n = f.n;
        let j = f.j0.clone();
        // x = -J Jᵀ c
        let mut x = vec![T::zero(); n];
        for k in 0..n {
            let col = &j[k * n..(k + 1) * n];
            let d = dot(col, c);
            for (xi, &v) in x.iter_mut().zip(col) {
                *xi -= d * v;
            }
        }
        let row_norms = (0..set.n_constraints())
            .map(|i| norm2(set.d_mat().row(i)))
            .collect();
        Workspace {
            n,
            set,
            row_norms,
            x,
            j,
            r: Vec::new(),
            active: Vec::new(),
            u: Vec::new(),
            is_active: vec![false; set.n_constraints()],
        }
    }

    fn jcol(&self, k: usize) -> &[T] {
        &self.j[k * self.n..(k + 1) * self.n]
    }

    /// Slack of constraint `i` in `nᵀx ≥ b` form, i.e. `−(D_i x + d_i)`.
    fn slack(&self, i: usize) -> T {
        -(dot(self.set.d_mat().row(i), &self.x) + self.set.d()[i])
    }

    fn violation_eps(&self, i: usize) -> T {
        T::lit(1e-12) * (T::one() + self.set.d()[i].abs() + self.row_norms[i] * norm_inf(&self.x))
    }

    /// `d = Jᵀ n_p` with `n_p = −D_p`.
    fn jt_normal(&self, p: usize) -> Vec<T> {
        let row = self.set.d_mat().row(p);
        (0..self.n).map(|k| -dot(self.jcol(k), row)).collect()
    }

    fn rotate_cols(&mut self, a: usize, b: usize, c: T, s: T) {
        let n = self.n;
        let (lo, hi) = self.j.split_at_mut(b * n);
        let ca = &mut lo[a * n..(a + 1) * n];
        let cb = &mut hi[..n];
        for (x, y) in ca.iter_mut().zip(cb.iter_mut()) {
            let (xa, yb) = (*x, *y);
            *x = c * xa + s * yb;
            *y = -s * xa + c * yb;
        }
    }

    fn direction(&self, d: &[T]) -> (Vec<T>, Vec<T>) {
        let q = self.r.len();
        let mut z = vec![T::zero(); self.n];
        for k in q..self.n {
            if d[k] != T::zero() {
                for (zi, &v) in z.iter_mut().zip(self.jcol(k)) {
                    *zi += d[k] * v;
                }
            }
        }
        let mut rr = vec![T::zero(); q];
        for i in (0..q).rev() {
            let mut s = d[i];
            for (jdx, rj) in rr.iter().enumerate().skip(i + 1) {
                s -= self.r[jdx][i] * *rj;
            }
            rr[i] = s / self.r[i][i];
        }
        (z, rr)
    }

    fn add_constraint(&mut self, p: usize, mut d: Vec<T>) {
        let q = self.r.len();
        for k in ((q + 1)..self.n).rev() {
            if d[k] == T::zero() {
                continue;
            }
            let h = d[k - 1].hypot(d[k]);
            let c = d[k - 1] / h;
            let s = d[k] / h;
            d[k - 1] = h;
            d[k] = T::zero();
            self.rotate_cols(k - 1, k, c, s);
        }
        d.truncate(q + 1);
        self.r.push(d);
        self.active.push(p);
        self.is_active[p] = true;
    }

    fn drop_constraint(&mut self, l: usize) {
        self.r.remove(l);
        let p = self.active.remove(l);
        self.is_active[p] = false;
        self.u.remove(l);
        let q = self.r.len();
        for k in l..q {
            let a = self.r[k][k];
            let b = self.r[k][k + 1];
            let h = a.hypot(b);
            let (c, s) = if h == T::zero() {
                (T::one(), T::zero())
            } else {
                (a / h, b / h)
            };
            self.r[k][k] = h;
            self.r[k].truncate(k + 1);
            for jdx in (k + 1)..q {
                let x = self.r[jdx][k];
                let y = self.r[jdx][k + 1];
                self.r[jdx][k] = c * x + s * y;
                self.r[jdx][k + 1] = -s * x + c * y;
            }
            self.rotate_cols(k, k + 1, c, s);
        }
    }

    fn tiny(&self) -> T {
        T::epsilon() * T::lit(1e3)
    }

    /// Forces the constraints active at `w` into the working set. Returns
    /// `false` if the resulting multipliers are not dual feasible, in which
    /// case the caller restarts cold.
    fn seed_from(&mut self, w: &[T], iterations: &mut usize) -> bool {
        let g = self.set.eval(w);
        let wn = norm_inf(w);
        let candidates: Vec<usize> = (0..g.len())
            .filter(|&i| {
                g[i].abs() <= T::lit(1e-9) * (T::one() + self.set.d()[i].abs() + self.row_norms[i] * wn)
            })
            .collect();
        if candidates.is_empty() {
            return true;
        }
        for p in candidates {
            if self.r.len() >= self.n {
                break;
            }
            let d = self.jt_normal(p);
            let (z, rr) = self.direction(&d);
            let row = self.set.d_mat().row(p);
            let zn = -dot(&z, row);
            if !(zn.abs() > self.tiny() * (T::one() + self.row_norms[p] * self.row_norms[p])) {
                continue;
            }
            let t = -self.slack(p) / zn;
            for (xi, &zi) in self.x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (uk, &rk) in self.u.iter_mut().zip(&rr) {
                *uk -= t * rk;
            }
            self.u.push(t);
            self.add_constraint(p, d);
            *iterations += 1;
        }
        let neg_tol = T::lit(-1e-12) * (T::one() + norm_inf(&self.u));
        if self.u.iter().any(|&v| v < neg_tol) {
            return false;
        }
        for v in self.u.iter_mut() {
            *v = v.max(T::zero());
        }
        true
    }

    fn most_violated(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.set.n_constraints() {
            if self.is_active[i] {
                continue;
            }
            let s = self.slack(i);
            if s < -self.violation_eps(i) {
                let score = s / self.row_norms[i].max(T::min_positive_value());
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((i, score));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn run(&mut self, max_iter: usize, iterations: &mut usize) -> Outcome {
        loop {
            let Some(p) = self.most_violated() else {
                return Outcome::Done;
            };
            let mut u_p = T::zero();
            loop {
                *iterations += 1;
                if *iterations > max_iter {
                    return Outcome::IterLimit;
                }
                let d = self.jt_normal(p);
                let (z, rr) = self.direction(&d);
                // partial (dual) step length
                let mut t1 = T::infinity();
                let mut drop_at = None;
                for (k, &rk) in rr.iter().enumerate() {
                    if rk > T::zero() {
                        let ratio = self.u[k] / rk;
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(k);
                        }
                    }
                }
                // full (primal) step length
                let row = self.set.d_mat().row(p);
                let zn = -dot(&z, row);
                let scale = T::one() + self.row_norms[p] * self.row_norms[p];
                let t2 = if norm_inf(&z) > self.tiny() && zn > self.tiny() * scale {
                    -self.slack(p) / zn
                } else {
                    T::infinity()
                };
                let t = t1.min(t2);
                if t.is_infinite() {
                    return Outcome::Infeasible;
                }
                if t2.is_finite() {
                    for (xi, &zi) in self.x.iter_mut().zip(&z) {
                        *xi += t * zi;
                    }
                }
                for (uk, &rk) in self.u.iter_mut().zip(&rr) {
                    *uk -= t * rk;
                }
                u_p += t;
                if t2 <= t1 {
                    self.u.push(u_p);
                    self.add_constraint(p, d);
                    break;
                }
                let l = drop_at.expect("partial step has a blocking constraint");
                self.u[l] = T::zero();
                self.drop_constraint(l);
            }
        }
    }
}
