use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, lambda_min_sym, sym_eigen};
use crate::scalar::Scalar;

/// An N-agent linear-quadratic game
///
/// ```text
/// x[t+1] = A x[t] + Σ_i B_i u_i[t]
/// ℓ_i    = ½ (x[t]ᵀ Q_i x[t] + u_i[t]ᵀ R_i u_i[t])
/// ```
///
/// with two families of stage constraints: input constraints
/// `Ex x[t] + Σ_j Du_j u_j[t] + du ≤ 0` for `t = 0..T−1` and state
/// constraints `Dx x[t] + dx ≤ 0` for `t = 1..T`.
///
/// `Ex` is zero for a plain input constraint; it becomes nonzero after
/// [`prestabilize`](LqGame::prestabilize), which rewrites bounds on the
/// total input as bounds on the residual input.
#[derive(Clone, Debug, PartialEq)]
pub struct LqGame<T> {
    pub a: Mat<T>,
    pub b: Vec<Mat<T>>,
    pub q: Vec<Mat<T>>,
    pub r: Vec<Mat<T>>,
    pub du: Vec<Mat<T>>,
    pub ex: Mat<T>,
    pub du_offset: Vec<T>,
    pub dx: Mat<T>,
    pub dx_offset: Vec<T>,
    pub horizon: usize,
}

impl<T: Scalar> LqGame<T> {
    /// A game without constraints.
    pub fn unconstrained(a: Mat<T>, b: Vec<Mat<T>>, q: Vec<Mat<T>>, r: Vec<Mat<T>>, horizon: usize) -> Result<Self> {
        let n = a.rows();
        let du = b.iter().map(|bi| Mat::zeros(0, bi.cols())).collect();
        LqGame {
            a,
            b,
            q,
            r,
            du,
            ex: Mat::zeros(0, n),
            du_offset: Vec::new(),
            dx: Mat::zeros(0, n),
            dx_offset: Vec::new(),
            horizon,
        }
        .validated()
    }

    /// Checks every dimension; returns the game unchanged on success.
    pub fn validated(self) -> Result<Self> {
        let n = self.a.rows();
        let bad = |msg: String| Err(Error::DimensionMismatch(msg));
        if !self.a.is_square() {
            return bad(format!("A is {}x{}", self.a.rows(), self.a.cols()));
        }
        let na = self.b.len();
        if na == 0 {
            return bad("a game needs at least one agent".into());
        }
        if self.q.len() != na || self.r.len() != na || self.du.len() != na {
            return bad(format!(
                "{} input matrices, {} state weights, {} input weights, {} input-constraint blocks",
                na,
                self.q.len(),
                self.r.len(),
                self.du.len()
            ));
        }
        let pu = self.du_offset.len();
        for i in 0..na {
            let m = self.b[i].cols();
            if self.b[i].rows() != n {
                return bad(format!("B[{i}] has {} rows, expected {n}", self.b[i].rows()));
            }
            if self.q[i].shape() != (n, n) {
                return bad(format!("Q[{i}] must be {n}x{n}"));
            }
            if self.r[i].shape() != (m, m) {
                return bad(format!("R[{i}] must be {m}x{m}"));
            }
            if self.du[i].shape() != (pu, m) {
                return bad(format!(
                    "Du[{i}] is {}x{}, expected {pu}x{m}",
                    self.du[i].rows(),
                    self.du[i].cols()
                ));
            }
        }
        if self.ex.shape() != (pu, n) {
            return bad(format!("Ex must be {pu}x{n}"));
        }
        if self.dx.shape() != (self.dx_offset.len(), n) {
            return bad(format!(
                "Dx is {}x{} but dx has length {}",
                self.dx.rows(),
                self.dx.cols(),
                self.dx_offset.len()
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.b.len()
    }

    pub fn n_states(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self, i: usize) -> usize {
        self.b[i].cols()
    }

    /// Length of the stacked decision vector, `T·Σ m_i`.
    pub fn n_decisions(&self) -> usize {
        self.horizon * self.b.iter().map(|b| b.cols()).sum::<usize>()
    }

    /// Offset of agent `i`'s block `(u_i[0], …, u_i[T−1])` in the stacked
    /// vector (agent outer, time inner).
    pub fn agent_offset(&self, i: usize) -> usize {
        self.horizon * self.b[..i].iter().map(|b| b.cols()).sum::<usize>()
    }

    pub fn agent_block<'a>(&self, u: &'a [T], i: usize) -> &'a [T] {
        let o = self.agent_offset(i);
        &u[o..o + self.horizon * self.input_dim(i)]
    }

    /// Agent inputs at time `t` from a stacked sequence.
    pub fn inputs_at(&self, u: &[T], t: usize) -> Vec<Vec<T>> {
        (0..self.n_agents())
            .map(|i| {
                let m = self.input_dim(i);
                let o = self.agent_offset(i) + t * m;
                u[o..o + m].to_vec()
            })
            .collect()
    }

    /// `A x + Σ B_i u_i`
    pub fn step(&self, x: &[T], inputs: &[Vec<T>]) -> Vec<T> {
        let mut next = self.a.matvec(x);
        for (bi, ui) in self.b.iter().zip(inputs) {
            for (nx, v) in next.iter_mut().zip(bi.matvec(ui)) {
                *nx += v;
            }
        }
        next
    }

    /// `x[0..=T]` under a stacked input sequence.
    pub fn rollout(&self, x0: &[T], u: &[T]) -> Vec<Vec<T>> {
        let mut xs = Vec::with_capacity(self.horizon + 1);
        xs.push(x0.to_vec());
        for t in 0..self.horizon {
            let next = self.step(&xs[t], &self.inputs_at(u, t));
            xs.push(next);
        }
        xs
    }

    /// Values of the input-family constraints at one stage.
    pub fn input_constraints(&self, x: &[T], inputs: &[Vec<T>]) -> Vec<T> {
        let mut g = self.ex.matvec(x);
        for (di, ui) in self.du.iter().zip(inputs) {
            for (gi, v) in g.iter_mut().zip(di.matvec(ui)) {
                *gi += v;
            }
        }
        for (gi, &o) in g.iter_mut().zip(&self.du_offset) {
            *gi += o;
        }
        g
    }

    /// Values of the state-family constraints at one state.
    pub fn state_constraints(&self, x: &[T]) -> Vec<T> {
        let mut g = self.dx.matvec(x);
        for (gi, &o) in g.iter_mut().zip(&self.dx_offset) {
            *gi += o;
        }
        g
    }

    /// Substitutes `u_i = K_i x + ũ_i`: the returned game has dynamics
    /// `A + Σ B_i K_i`, input-constraint state term `Ex + Σ Du_i K_i`, and the
    /// same weights, now acting on the residual inputs `ũ_i`.
    pub fn prestabilize(&self, gains: &[Mat<T>]) -> Result<Self> {
        if gains.len() != self.n_agents() {
            return Err(Error::DimensionMismatch(format!(
                "{} pre-stabilizing gains for {} agents",
                gains.len(),
                self.n_agents()
            )));
        }
        let mut out = self.clone();
        for (i, k) in gains.iter().enumerate() {
            if k.shape() != (self.input_dim(i), self.n_states()) {
                return Err(Error::DimensionMismatch(format!(
                    "K_pre[{i}] must be {}x{}",
                    self.input_dim(i),
                    self.n_states()
                )));
            }
            out.a = &out.a + &self.b[i].matmul(k);
            out.ex = &out.ex + &self.du[i].matmul(k);
        }
        Ok(out)
    }

    /// Checks of the standing assumptions on the weights and dynamics.
    pub fn diagnostics(&self) -> GameDiagnostics {
        let n = self.n_states();
        let tol = T::lit(1e-9);
        let eig = eigenvalues(&self.a).unwrap_or_default();
        let unstable: Vec<(T, T)> = eig
            .into_iter()
            .filter(|&(re, im)| (re * re + im * im).sqrt() >= T::one() - tol)
            .collect();
        let mut out = GameDiagnostics::default();
        for i in 0..self.n_agents() {
            let qi = &self.q[i];
            let ri = &self.r[i];
            out.q_psd.push(
                qi.asymmetry() <= tol * qi.max_abs().max(T::one())
                    && lambda_min_sym(&qi.sym_part()) >= -tol,
            );
            out.r_pd.push(
                ri.asymmetry() <= tol * ri.max_abs().max(T::one())
                    && lambda_min_sym(&ri.sym_part()) > T::zero(),
            );
            out.stabilizable.push(
                unstable
                    .iter()
                    .all(|&(re, im)| pbh_full_rank(&self.a, &self.b[i], re, im, false)),
            );
            out.detectable.push(
                unstable
                    .iter()
                    .all(|&(re, im)| pbh_full_rank(&self.a, &self.q[i], re, im, true)),
            );
        }
        out.n_states = n;
        out
    }

    pub fn to_f64(&self) -> LqGame<f64> {
        let m = |a: &Mat<T>| a.map(|v| v.to_f64_lossy());
        let v = |a: &[T]| a.iter().map(|x| x.to_f64_lossy()).collect();
        LqGame {
            a: m(&self.a),
            b: self.b.iter().map(m).collect(),
            q: self.q.iter().map(m).collect(),
            r: self.r.iter().map(m).collect(),
            du: self.du.iter().map(m).collect(),
            ex: m(&self.ex),
            du_offset: v(&self.du_offset),
            dx: m(&self.dx),
            dx_offset: v(&self.dx_offset),
            horizon: self.horizon,
        }
    }

    pub fn from_f64(g: &LqGame<f64>) -> Self {
        let m = |a: &Mat<f64>| a.map(T::lit);
        let v = |a: &[f64]| a.iter().map(|&x| T::lit(x)).collect();
        LqGame {
            a: m(&g.a),
            b: g.b.iter().map(m).collect(),
            q: g.q.iter().map(m).collect(),
            r: g.r.iter().map(m).collect(),
            du: g.du.iter().map(m).collect(),
            ex: m(&g.ex),
            du_offset: v(&g.du_offset),
            dx: m(&g.dx),
            dx_offset: v(&g.dx_offset),
            horizon: g.horizon,
        }
    }
}

/// Popov–Belevitch–Hautus test at one eigenvalue `re + i·im`: whether
/// `[A − λI, B]` (or `[A − λI; C]` when `transpose_pair`) has full rank `n`,
/// done in real arithmetic on the doubled system.
fn pbh_full_rank<T: Scalar>(a: &Mat<T>, b: &Mat<T>, re: T, im: T, transpose_pair: bool) -> bool {
    let n = a.rows();
    let (a, b) = if transpose_pair {
        (a.transpose(), b.transpose())
    } else {
        (a.clone(), b.clone())
    };
    let m = b.cols();
    let mut big = Mat::zeros(2 * n, 2 * n + 2 * m);
    for r in 0..n {
        for c in 0..n {
            let v = a[(r, c)] - if r == c { re } else { T::zero() };
            big[(r, c)] = v;
            big[(n + r, n + c)] = v;
        }
        big[(r, n + r)] = im;
        big[(n + r, r)] = -im;
        for c in 0..m {
            big[(r, 2 * n + c)] = b[(r, c)];
            big[(n + r, 2 * n + m + c)] = b[(r, c)];
        }
    }
    let gram = big.matmul(&big.transpose());
    let (ev, _) = sym_eigen(&gram, false);
    let top = ev.last().copied().unwrap_or(T::zero()).max(T::one());
    ev.iter().all(|&e| e > T::lit(1e-10) * top)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GameDiagnostics {
    pub n_states: usize,
    pub q_psd: Vec<bool>,
    pub r_pd: Vec<bool>,
    pub stabilizable: Vec<bool>,
    pub detectable: Vec<bool>,
}

impl GameDiagnostics {
    pub fn all_hold(&self) -> bool {
        [&self.q_psd, &self.r_pd, &self.stabilizable, &self.detectable]
            .iter()
            .all(|v| v.iter().all(|&b| b))
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct GameFile {
    A: Rows,
    B: Vec<Rows>,
    Q: Vec<Rows>,
    R: Vec<Rows>,
    #[serde(default)]
    Du: Vec<Rows>,
    #[serde(default)]
    du: Vec<f64>,
    #[serde(default)]
    Dx: Rows,
    #[serde(default)]
    dx: Vec<f64>,
    T: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    K_pre: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    Ex: Option<Rows>,
}

fn mat(rows: &Rows, cols: usize) -> Result<Mat<f64>> {
    if rows.is_empty() {
        Ok(Mat::zeros(0, cols))
    } else {
        Mat::from_rows(rows)
    }
}

fn rows(m: &Mat<f64>) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

impl LqGame<f64> {
    /// Parses the game JSON format. Matrices are nested row lists; agents'
    /// input-constraint blocks `Du` may be omitted when there are none. When
    /// `K_pre` is present the returned game is the pre-stabilized one.
    pub fn from_json(s: &str) -> Result<Self> {
        let f: GameFile = serde_json::from_str(s)?;
        let a = Mat::from_rows(&f.A)?;
        let n = a.rows();
        let b = f.B.iter().map(|r| Mat::from_rows(r)).collect::<Result<Vec<_>>>()?;
        let q = f.Q.iter().map(|r| Mat::from_rows(r)).collect::<Result<Vec<_>>>()?;
        let r = f.R.iter().map(|r| Mat::from_rows(r)).collect::<Result<Vec<_>>>()?;
        let du = if f.Du.is_empty() {
            b.iter().map(|bi| Mat::zeros(f.du.len(), bi.cols())).collect()
        } else {
            f.Du
                .iter()
                .zip(&b)
                .map(|(d, bi)| mat(d, bi.cols()))
                .collect::<Result<Vec<_>>>()?
        };
        let ex = match &f.Ex {
            Some(e) => mat(e, n)?,
            None => Mat::zeros(f.du.len(), n),
        };
        let game = LqGame {
            a,
            b,
            q,
            r,
            du,
            ex,
            du_offset: f.du,
            dx: mat(&f.Dx, n)?,
            dx_offset: f.dx,
            horizon: f.T,
        }
        .validated()?;
        match f.K_pre {
            Some(k) => {
                let k = k.iter().map(|r| Mat::from_rows(r)).collect::<Result<Vec<_>>>()?;
                game.prestabilize(&k)
            }
            None => Ok(game),
        }
    }

    pub fn to_json(&self) -> String {
        let ex_nonzero = self.ex.as_slice().iter().any(|&v| v != 0.0);
        let f = GameFile {
            A: rows(&self.a),
            B: self.b.iter().map(rows).collect(),
            Q: self.q.iter().map(rows).collect(),
            R: self.r.iter().map(rows).collect(),
            Du: self.du.iter().map(rows).collect(),
            du: self.du_offset.clone(),
            Dx: rows(&self.dx),
            dx: self.dx_offset.clone(),
            T: self.horizon,
            K_pre: None,
            Ex: ex_nonzero.then(|| rows(&self.ex)),
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
