//! Affine variational inequalities `AVI(C, M, q)`: find `u* ∈ C` with
//! `⟨M u* + q, u − u*⟩ ≥ 0` for all `u ∈ C`, where `C = {u : D u + d ≤ 0}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::linalg::{lambda_min_sym, spectral_norm};
use crate::qp::{FixedConstraintQp, QpFactor, QpSettings, QpStatus};
use crate::scalar::{dist2, Scalar};

/// The polyhedron `{u : D u + d ≤ 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron<T> {
    d_mat: Mat<T>,
    d: Vec<T>,
}

impl<T: Scalar> Polyhedron<T> {
    pub fn new(d_mat: Mat<T>, d: Vec<T>) -> Result<Self> {
        if d_mat.rows() != d.len() {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix has {} rows but offset has length {}",
                d_mat.rows(),
                d.len()
            )));
        }
        if !d_mat.is_finite() || !d.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite constraint data".into()));
        }
        Ok(Polyhedron { d_mat, d })
    }

    /// All of `ℝⁿ` (no rows).
    pub fn unconstrained(n: usize) -> Self {
        Polyhedron {
            d_mat: Mat::zeros(0, n),
            d: Vec::new(),
        }
    }

    /// The box `lo ≤ u ≤ hi`, componentwise.
    pub fn boxed(lo: &[T], hi: &[T]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch("box bounds differ in length".into()));
        }
        let n = lo.len();
        let mut d_mat = Mat::zeros(2 * n, n);
        let mut d = Vec::with_capacity(2 * n);
        for i in 0..n {
            d_mat[(i, i)] = T::one();
            d.push(-hi[i]);
        }
        for i in 0..n {
            d_mat[(n + i, i)] = -T::one();
            d.push(lo[i]);
        }
        Polyhedron::new(d_mat, d)
    }

    pub fn dim(&self) -> usize {
        self.d_mat.cols()
    }

    pub fn n_constraints(&self) -> usize {
        self.d.len()
    }

    pub fn d_mat(&self) -> &Mat<T> {
        &self.d_mat
    }

    pub fn d(&self) -> &[T] {
        &self.d
    }

    /// `D u + d`
    pub fn eval(&self, u: &[T]) -> Vec<T> {
        let mut g = self.d_mat.matvec(u);
        for (gi, &di) in g.iter_mut().zip(&self.d) {
            *gi += di;
        }
        g
    }

    /// `max(0, max_j (D u + d)_j)`
    pub fn max_violation(&self, u: &[T]) -> T {
        self.eval(u).into_iter().fold(T::zero(), |m, v| m.max(v))
    }

    pub fn contains(&self, u: &[T], tol: T) -> bool {
        self.eval(u).into_iter().all(|v| v <= tol)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AviProblem<T> {
    pub m: Mat<T>,
    pub q: Vec<T>,
    pub set: Polyhedron<T>,
}

impl<T: Scalar> AviProblem<T> {
    pub fn new(m: Mat<T>, q: Vec<T>, set: Polyhedron<T>) -> Result<Self> {
        let p = AviProblem { m, q, set };
        let issues = p.dimension_issues();
        if let Some(first) = issues.into_iter().next() {
            return Err(Error::DimensionMismatch(first));
        }
        if !p.m.is_finite() || !p.q.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite problem data".into()));
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    fn dimension_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.m.is_square() {
            out.push(format!("M is {}x{}, not square", self.m.rows(), self.m.cols()));
        }
        if self.m.rows() != self.q.len() {
            out.push(format!(
                "M has {} rows but q has length {}",
                self.m.rows(),
                self.q.len()
            ));
        }
        if self.set.dim() != self.q.len() {
            out.push(format!(
                "D has {} columns but q has length {}",
                self.set.dim(),
                self.q.len()
            ));
        }
        out
    }

    /// `F(u) = M u + q`
    pub fn operator(&self, u: &[T]) -> Vec<T> {
        let mut f = self.m.matvec(u);
        for (fi, &qi) in f.iter_mut().zip(&self.q) {
            *fi += qi;
        }
        f
    }

    pub fn to_f64(&self) -> AviProblem<f64> {
        AviProblem {
            m: self.m.map(|v| v.to_f64_lossy()),
            q: self.q.iter().map(|v| v.to_f64_lossy()).collect(),
            set: Polyhedron {
                d_mat: self.set.d_mat.map(|v| v.to_f64_lossy()),
                d: self.set.d.iter().map(|v| v.to_f64_lossy()).collect(),
            },
        }
    }

    pub fn from_f64(p: &AviProblem<f64>) -> Self {
        AviProblem {
            m: p.m.map(T::lit),
            q: p.q.iter().map(|&v| T::lit(v)).collect(),
            set: Polyhedron {
                d_mat: p.set.d_mat.map(T::lit),
                d: p.set.d.iter().map(|&v| T::lit(v)).collect(),
            },
        }
    }
}

/// Euclidean projection onto polyhedra sharing one constraint matrix.
///
/// The factorization work for the matrix is cached across calls and the last
/// result is kept as the warm start for the next one.
#[derive(Clone, Debug)]
pub struct Projector<T> {
    n: usize,
    qp: Option<FixedConstraintQp<T>>,
    settings: QpSettings<T>,
    last: Option<Vec<T>>,
}

impl<T: Scalar> Projector<T> {
    pub fn new(n: usize) -> Self {
        Projector {
            n,
            qp: None,
            settings: QpSettings::default(),
            last: None,
        }
    }

    pub fn project(&mut self, set: &Polyhedron<T>, v: &[T]) -> Result<Vec<T>> {
        if set.n_constraints() == 0 {
            return Ok(v.to_vec());
        }
        let stale = match &self.qp {
            Some(qp) => qp.d_mat() != set.d_mat(),
            None => true,
        };
        if stale {
            self.qp = Some(FixedConstraintQp::new(
                QpFactor::identity(self.n),
                set.d_mat().clone(),
            )?);
            self.last = None;
        }
        let qp = self.qp.as_ref().expect("initialized above");
        let c: Vec<T> = v.iter().map(|&x| -x).collect();
        let sol = qp.solve_on(&c, set, &self.settings, self.last.as_deref())?;
        if sol.status == QpStatus::Infeasible {
            return Err(Error::Infeasible);
        }
        self.last = Some(sol.y.clone());
        Ok(sol.y)
    }

    /// `‖u − Π_C(u − step·F(u))‖`
    pub fn natural_residual(&mut self, p: &AviProblem<T>, u: &[T], step: T) -> Result<T> {
        let f = p.operator(u);
        let v: Vec<T> = u.iter().zip(&f).map(|(&ui, &fi)| ui - step * fi).collect();
        let proj = self.project(&p.set, &v)?;
        Ok(dist2(u, &proj))
    }
}

/// `argmin_{u ∈ C} ‖u − v‖`
pub fn project<T: Scalar>(set: &Polyhedron<T>, v: &[T]) -> Result<Vec<T>> {
    if v.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point of length {} projected onto a set in dimension {}",
            v.len(),
            set.dim()
        )));
    }
    Projector::new(v.len()).project(set, v)
}

/// `‖u − Π_C(u − step·(M u + q))‖`; the stopping metric of every solver
/// (with `step = 1`).
pub fn natural_residual<T: Scalar>(p: &AviProblem<T>, u: &[T], step: T) -> Result<T> {
    if u.len() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point of length {} for a problem of dimension {}",
            u.len(),
            p.dim()
        )));
    }
    Projector::new(u.len()).natural_residual(p, u, step)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityConstants<T> {
    /// Strong monotonicity modulus, `max(0, λ_min((M+Mᵀ)/2))`.
    pub mu: T,
    /// `λ_min((M+Mᵀ)/2)` before clipping.
    pub mu_raw: T,
    /// Lipschitz constant `‖M‖₂`.
    pub lipschitz: T,
}

pub fn monotonicity_constants<T: Scalar>(m: &Mat<T>) -> MonotonicityConstants<T> {
    let mu_raw = lambda_min_sym(&m.sym_part());
    let lipschitz = spectral_norm(m);
    MonotonicityConstants {
        mu: mu_raw.max(T::zero()).min(lipschitz),
        mu_raw,
        lipschitz,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnosis {
    pub dimensions_ok: bool,
    pub mu: f64,
    pub lipschitz: f64,
    pub strongly_monotone: bool,
    pub nonempty: bool,
    pub strictly_feasible: bool,
    /// Largest uniform slack `s` found with `D u + d + s·1 ≤ 0`.
    pub slack: f64,
    pub issues: Vec<String>,
}

impl Diagnosis {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks dimensions, strong monotonicity, and whether `C` has a strictly
/// feasible point. Never fails; problems are listed in `issues`.
pub fn validate<T: Scalar>(p: &AviProblem<T>) -> Diagnosis {
    let mut issues = p.dimension_issues();
    let dimensions_ok = issues.is_empty();
    let mut diag = Diagnosis {
        dimensions_ok,
        mu: f64::NAN,
        lipschitz: f64::NAN,
        strongly_monotone: false,
        nonempty: false,
        strictly_feasible: false,
        slack: f64::NAN,
        issues: Vec::new(),
    };
    if !dimensions_ok {
        diag.issues = issues;
        return diag;
    }
    let mc = monotonicity_constants(&p.m);
    diag.mu = mc.mu_raw.to_f64_lossy();
    diag.lipschitz = mc.lipschitz.to_f64_lossy();
    diag.strongly_monotone = mc.mu_raw > T::zero();
    if !diag.strongly_monotone {
        issues.push(format!("not strongly monotone (mu = {:e})", diag.mu));
    }
    match project(&p.set, &vec![T::zero(); p.dim()]) {
        Ok(_) => diag.nonempty = true,
        Err(_) => issues.push("infeasible set".into()),
    }
    if diag.nonempty {
        let (slack, witness) = max_uniform_slack(&p.set);
        diag.slack = slack.to_f64_lossy();
        diag.strictly_feasible = witness;
        if !witness {
            issues.push("no strictly feasible point".into());
        }
    }
    diag.issues = issues;
    diag
}

/// Maximizes the uniform slack `s ≤ 1` over `D u + d + s·1 ≤ 0` with a
/// vanishing proximal term on `(u, s)`. Returns the best slack found and
/// whether a point with `D u + d < 0` was exhibited.
fn max_uniform_slack<T: Scalar>(set: &Polyhedron<T>) -> (T, bool) {
    let n = set.dim();
    let m = set.n_constraints();
    if m == 0 {
        return (T::one(), true);
    }
    let mut dm = Mat::zeros(m + 1, n + 1);
    let mut d = set.d().to_vec();
    for i in 0..m {
        dm.row_mut(i)[..n].copy_from_slice(set.d_mat().row(i));
        dm[(i, n)] = T::one();
    }
    dm[(m, n)] = T::one();
    d.push(-T::one());
    let lifted = Polyhedron { d_mat: dm, d };
    let mut c = vec![T::zero(); n + 1];
    c[n] = -T::one();
    let mut best = T::neg_infinity();
    for eps in [1.0, 1e-3, 1e-6, 1e-9] {
        let eps = T::lit(eps);
        let Ok(factor) = QpFactor::new(&Mat::identity(n + 1).scale(eps)) else {
            continue;
        };
        let Ok(sol) = factor.solve(&c, &lifted, &QpSettings::default(), None) else {
            continue;
        };
        if sol.status == QpStatus::Infeasible {
            continue;
        }
        let s = sol.y[n];
        best = best.max(s);
        if set.eval(&sol.y[..n]).into_iter().all(|g| g < T::zero()) {
            return (best, true);
        }
    }
    (best, false)
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct AviFile {
    n: usize,
    m: usize,
    M: Vec<f64>,
    q: Vec<f64>,
    D: Vec<f64>,
    d: Vec<f64>,
}

impl AviProblem<f64> {
    /// Parses the JSON problem format (`n`, `m`, row-major `M`, `q`, row-major
    /// `D`, `d`).
    pub fn from_json(s: &str) -> Result<Self> {
        let f: AviFile = serde_json::from_str(s)?;
        let m = Mat::from_row_major(f.n, f.n, f.M)?;
        let d_mat = Mat::from_row_major(f.m, f.n, f.D)?;
        AviProblem::new(m, f.q, Polyhedron::new(d_mat, f.d)?)
    }

    pub fn to_json(&self) -> String {
        let f = AviFile {
            n: self.dim(),
            m: self.set.n_constraints(),
            M: self.m.as_slice().to_vec(),
            q: self.q.clone(),
            D: self.set.d_mat.as_slice().to_vec(),
            d: self.set.d.clone(),
        };
        serde_json::to_string_pretty(&f).expect("finite numbers serialize")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
