use crate::avi::{AviProblem, Polyhedron};
use crate::blockmat::{build_gamma, build_theta, kron, Mat};
use crate::error::{Error, Result};
use crate::qp::{QpFactor, QpSettings, QpStatus};
use crate::scalar::{norm2, Scalar};
use crate::solvers::{make_dr_splitting, Splitting};

use super::riccati::{
    augmented_systems, solve_open_loop_riccati, AugmentedSystem, OpenLoopRiccati,
    RiccatiSettings,
};
use super::LqGame;

#[derive(Clone, Copy, Debug)]
pub struct CompileOptions<T> {
    pub riccati: RiccatiSettings<T>,
    /// Steps of the equilibrium closed loop simulated by the terminal-set test
    /// before switching to a norm bound for the tail.
    pub terminal_steps: usize,
    /// Constraints must hold with at least this slack along the closed loop.
    pub terminal_margin: T,
}

impl<T: Scalar> Default for CompileOptions<T> {
    fn default() -> Self {
        CompileOptions {
            riccati: RiccatiSettings::default(),
            terminal_steps: 50,
            terminal_margin: T::lit(1e-9),
        }
    }
}

/// Inner approximation of the set of states from which the open-loop
/// equilibrium feedback `u_i = K_i x` keeps every stage constraint strictly
/// satisfied forever.
#[derive(Clone, Debug)]
pub struct TerminalSet<T> {
    /// Constraint rows on the state under the feedback: `[Dx; Ex + Σ Du_j K_j]`.
    pub rows: Mat<T>,
    pub offsets: Vec<T>,
    /// Bound on `‖A_cl^k‖₂` over all `k ≥ 0`.
    pub gain_bound: T,
    /// Any state with norm at most this (times `gain_bound`) satisfies every
    /// row with the margin.
    pub radius: T,
    pub steps: usize,
    pub margin: T,
}

impl<T: Scalar> TerminalSet<T> {
    fn new(g: &LqGame<T>, ol: &OpenLoopRiccati<T>, steps: usize, margin: T) -> Self {
        let mut input_rows = g.ex.clone();
        for (du, k) in g.du.iter().zip(&ol.k) {
            input_rows = &input_rows + &du.matmul(k);
        }
        let rows = Mat::vstack(&[&g.dx, &input_rows]).expect("same width");
        let offsets: Vec<T> = g.dx_offset.iter().chain(&g.du_offset).copied().collect();

        // ‖A^k‖₂ ≤ max_{s<S} ‖A^s‖_F once ‖A^S‖_F < 1
        let n = g.n_states();
        let mut power = Mat::identity(n);
        let mut gain_bound = T::one();
        let mut settled = false;
        for _ in 0..100_000 {
            power = ol.closed_loop.matmul(&power);
            let f = power.frobenius();
            if f < T::one() {
                settled = true;
                break;
            }
            gain_bound = gain_bound.max(f);
        }
        if !settled {
            gain_bound = T::infinity();
        }

        let mut radius = T::infinity();
        for (r, &h) in offsets.iter().enumerate() {
            let w = norm2(rows.row(r));
            let room = -h - margin;
            if w > T::zero() {
                radius = radius.min(room / w);
            } else if room < T::zero() {
                radius = T::neg_infinity();
            }
        }
        TerminalSet {
            rows,
            offsets,
            gain_bound,
            radius,
            steps,
            margin,
        }
    }

    fn holds_at(&self, x: &[T]) -> bool {
        self.rows
            .matvec(x)
            .iter()
            .zip(&self.offsets)
            .all(|(&v, &h)| v + h <= -self.margin)
    }

    /// Simulates the closed loop for `steps` steps checking every row, then
    /// bounds the remaining trajectory by `gain_bound · ‖x_steps‖`.
    pub fn contains(&self, closed_loop: &Mat<T>, x: &[T]) -> bool {
        let mut x = x.to_vec();
        for _ in 0..self.steps {
            if !self.holds_at(&x) {
                return false;
            }
            x = closed_loop.matvec(&x);
        }
        self.offsets.is_empty() || norm2(&x) * self.gain_bound <= self.radius
    }
}

/// The affine VI whose solutions are the open-loop Nash equilibria of an
/// [`LqGame`] with the equilibrium cost-to-go as terminal cost:
///
/// ```text
/// F(u) = M u + Q_map x0,   C(x0) = {u : D u + d_const + D_map x0 ≤ 0}
/// ```
///
/// `u` stacks each agent's input sequence, agent-major. Everything that does
/// not depend on `x0` is built once here.
#[derive(Clone, Debug)]
pub struct CompiledGameVi<T> {
    pub game: LqGame<T>,
    pub theta: Mat<T>,
    pub gammas: Vec<Mat<T>>,
    /// Per-agent stacked state weight `blkdg(I_{T−1} ⊗ Q_i, P_i)`.
    pub state_weights: Vec<Mat<T>>,
    pub m: Mat<T>,
    pub q_map: Mat<T>,
    pub d_mat: Mat<T>,
    pub d_const: Vec<T>,
    pub d_map: Mat<T>,
    pub splitting: Splitting<T>,
    pub riccati: OpenLoopRiccati<T>,
    pub augmented: Vec<AugmentedSystem<T>>,
    pub terminal: TerminalSet<T>,
}

pub fn compile_vi<T: Scalar>(g: &LqGame<T>) -> Result<CompiledGameVi<T>> {
    compile_vi_with(g, &CompileOptions::default())
}

pub fn compile_vi_with<T: Scalar>(g: &LqGame<T>, opts: &CompileOptions<T>) -> Result<CompiledGameVi<T>> {
    let g = g.clone().validated()?;
    let riccati = solve_open_loop_riccati(&g, &opts.riccati)?;
    let augmented = augmented_systems(&g, &riccati, &opts.riccati)?;
    let t = g.horizon;
    let n = g.n_states();
    let na = g.n_agents();
    let theta = build_theta(&g.a, t);
    let gammas: Vec<Mat<T>> = g.b.iter().map(|b| build_gamma(&g.a, b, t)).collect();
    let state_weights: Vec<Mat<T>> = (0..na)
        .map(|i| {
            let mut w = Mat::zeros(n * t, n * t);
            for s in 0..t - 1 {
                w.set_block(s * n, s * n, &g.q[i]);
            }
            w.set_block((t - 1) * n, (t - 1) * n, &riccati.p[i]);
            w
        })
        .collect();

    let nd = g.n_decisions();
    let mut m = Mat::zeros(nd, nd);
    let mut q_map = Mat::zeros(nd, n);
    for i in 0..na {
        let oi = g.agent_offset(i);
        let gw = gammas[i].tr_matmul(&state_weights[i]);
        m.add_block(oi, oi, &kron(&Mat::identity(t), &g.r[i]));
        for j in 0..na {
            m.add_block(oi, g.agent_offset(j), &gw.matmul(&gammas[j]));
        }
        q_map.set_block(oi, 0, &gw.matmul(&theta));
    }

    // input family at t = 0..T−1, then state family at t = 1..T
    let pu = g.du_offset.len();
    let px = g.dx_offset.len();
    let rows = t * (pu + px);
    let mut d_mat = Mat::zeros(rows, nd);
    let mut d_map = Mat::zeros(rows, n);
    let mut d_const = Vec::with_capacity(rows);
    let mut a_pow = Mat::identity(n);
    for s in 0..t {
        let r0 = s * pu;
        for i in 0..na {
            let mi = g.input_dim(i);
            let oi = g.agent_offset(i);
            d_mat.set_block(r0, oi + s * mi, &g.du[i]);
            if s >= 1 && pu > 0 {
                let gblk = gammas[i].block((s - 1) * n, 0, n, mi * t);
                d_mat.add_block(r0, oi, &g.ex.matmul(&gblk));
            }
        }
        d_map.set_block(r0, 0, &g.ex.matmul(&a_pow));
        d_const.extend_from_slice(&g.du_offset);
        a_pow = g.a.matmul(&a_pow);
    }
    let mut a_pow = g.a.clone();
    for s in 1..=t {
        let r0 = t * pu + (s - 1) * px;
        for i in 0..na {
            let gblk = gammas[i].block((s - 1) * n, 0, n, g.input_dim(i) * t);
            d_mat.set_block(r0, g.agent_offset(i), &g.dx.matmul(&gblk));
        }
        d_map.set_block(r0, 0, &g.dx.matmul(&a_pow));
        d_const.extend_from_slice(&g.dx_offset);
        a_pow = g.a.matmul(&a_pow);
    }

    let splitting = make_dr_splitting(&m).map_err(|e| match e {
        Error::InvalidSplitting(msg) => Error::InvalidSplitting(format!(
            "the game's VI matrix is not strongly monotone: {msg}"
        )),
        other => other,
    })?;
    let terminal = TerminalSet::new(&g, &riccati, opts.terminal_steps, opts.terminal_margin);
    Ok(CompiledGameVi {
        game: g,
        theta,
        gammas,
        state_weights,
        m,
        q_map,
        d_mat,
        d_const,
        d_map,
        splitting,
        riccati,
        augmented,
        terminal,
    })
}

impl<T: Scalar> CompiledGameVi<T> {
    pub fn n_decisions(&self) -> usize {
        self.m.rows()
    }

    pub fn q_of(&self, x0: &[T]) -> Vec<T> {
        self.q_map.matvec(x0)
    }

    pub fn d_of(&self, x0: &[T]) -> Vec<T> {
        let mut d = self.d_map.matvec(x0);
        for (di, &c) in d.iter_mut().zip(&self.d_const) {
            *di += c;
        }
        d
    }

    pub fn problem(&self, x0: &[T]) -> Result<AviProblem<T>> {
        if x0.len() != self.game.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "initial state of length {}, expected {}",
                x0.len(),
                self.game.n_states()
            )));
        }
        AviProblem::new(
            self.m.clone(),
            self.q_of(x0),
            Polyhedron::new(self.d_mat.clone(), self.d_of(x0))?,
        )
    }

    /// Block form of the symmetric splitting part:
    /// `M1_{ij} = ½ δ_ij (I ⊗ R_i) + ¼ Γ_iᵀ(W_i + W_jᵀ)Γ_j`
    /// with `W_i` the stacked state weights.
    pub fn block_m1(&self) -> Mat<T> {
        let g = &self.game;
        let t = g.horizon;
        let nd = self.n_decisions();
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let mut m1 = Mat::zeros(nd, nd);
        for i in 0..g.n_agents() {
            let oi = g.agent_offset(i);
            m1.add_block(oi, oi, &kron(&Mat::identity(t), &g.r[i]).scale(half));
            for j in 0..g.n_agents() {
                let w = &self.state_weights[i] + &self.state_weights[j].transpose();
                let blk = self.gammas[i].tr_matmul(&w).matmul(&self.gammas[j]).scale(quarter);
                m1.add_block(oi, g.agent_offset(j), &blk);
            }
        }
        m1
    }

    /// `u_i[t] = K_i A_cl^t x0`, stacked agent-major.
    pub fn unconstrained_ne_sequence(&self, x0: &[T]) -> Vec<T> {
        let g = &self.game;
        let mut u = vec![T::zero(); g.n_decisions()];
        let mut x = x0.to_vec();
        for t in 0..g.horizon {
            for (i, k) in self.riccati.k.iter().enumerate() {
                let m = g.input_dim(i);
                let o = g.agent_offset(i) + t * m;
                u[o..o + m].copy_from_slice(&k.matvec(&x));
            }
            x = self.riccati.closed_loop.matvec(&x);
        }
        u
    }

    pub fn in_terminal_set(&self, x: &[T]) -> bool {
        self.terminal.contains(&self.riccati.closed_loop, x)
    }

    /// Equilibrium feedback inputs at a state.
    pub fn feedback(&self, x: &[T]) -> Vec<Vec<T>> {
        self.riccati.k.iter().map(|k| k.matvec(x)).collect()
    }

    /// `x[0..=T]` under a stacked input sequence.
    pub fn rollout(&self, x0: &[T], u: &[T]) -> Vec<Vec<T>> {
        self.game.rollout(x0, u)
    }

    /// `u` with agent `i`'s block replaced.
    pub fn substitute(&self, u: &[T], i: usize, ui: &[T]) -> Vec<T> {
        let mut out = u.to_vec();
        let o = self.game.agent_offset(i);
        out[o..o + ui.len()].copy_from_slice(ui);
        out
    }

    /// Agent `i`'s cost when it plays `ui` and everyone else plays `u_ref`:
    ///
    /// ```text
    /// Σ_{t<T} ½(x[t]ᵀQ_i x[t] + u_i[t]ᵀR_i u_i[t]) + ½ [x[T]; y]ᵀ P̂_i [x[T]; y]
    /// ```
    ///
    /// where `y` is the terminal state of `u_ref` itself, held fixed.
    pub fn agent_cost(&self, x0: &[T], i: usize, ui: &[T], u_ref: &[T]) -> T {
        let g = &self.game;
        let half = T::lit(0.5);
        let u = self.substitute(u_ref, i, ui);
        let xs = g.rollout(x0, &u);
        let y = g.rollout(x0, u_ref).pop().expect("nonempty rollout");
        let mut cost = T::zero();
        let m = g.input_dim(i);
        for t in 0..g.horizon {
            let x = &xs[t];
            let ut = &ui[t * m..(t + 1) * m];
            cost += half * (quad(&g.q[i], x) + quad(&g.r[i], ut));
        }
        let z: Vec<T> = xs[g.horizon].iter().chain(&y).copied().collect();
        cost + half * quad(&self.augmented[i].p, &z)
    }

    /// Agent `i`'s optimal reply to `u_ref` under [`agent_cost`](Self::agent_cost)
    /// subject to the joint constraints with the other agents' inputs fixed.
    pub fn best_response(&self, x0: &[T], i: usize, u_ref: &[T], qp: &QpSettings<T>) -> Result<Vec<T>> {
        let g = &self.game;
        let n = g.n_states();
        let t = g.horizon;
        let mi = g.input_dim(i) * t;
        let oi = g.agent_offset(i);
        let aug = &self.augmented[i];
        let mut w = self.state_weights[i].clone();
        w.set_block((t - 1) * n, (t - 1) * n, &aug.p11());
        let gamma = &self.gammas[i];
        let gw = gamma.tr_matmul(&w);
        let hess = (&kron(&Mat::identity(t), &g.r[i]) + &gw.matmul(gamma)).sym_part();

        let zero_i = vec![T::zero(); mi];
        let others = self.substitute(u_ref, i, &zero_i);
        let mut x_free = self.theta.matvec(x0);
        for (j, gj) in self.gammas.iter().enumerate() {
            if j != i {
                for (xv, v) in x_free.iter_mut().zip(gj.matvec(g.agent_block(&others, j))) {
                    *xv += v;
                }
            }
        }
        let y = g.rollout(x0, u_ref).pop().expect("nonempty rollout");
        let mut c = gw.matvec(&x_free);
        let tail = gamma.block((t - 1) * n, 0, n, mi);
        for (ci, v) in c.iter_mut().zip(tail.tr_matvec(&aug.p12().matvec(&y))) {
            *ci += v;
        }

        let rows = self.d_mat.rows();
        let d_i = Mat::from_fn(rows, mi, |r, k| self.d_mat[(r, oi + k)]);
        let mut d = self.d_of(x0);
        for (dv, v) in d.iter_mut().zip(self.d_mat.matvec(&others)) {
            *dv += v;
        }
        let set = Polyhedron::new(d_i, d)?;
        let sol = QpFactor::new(&hess)?.solve(&c, &set, qp, Some(g.agent_block(u_ref, i)))?;
        match sol.status {
            QpStatus::Optimal => Ok(sol.y),
            QpStatus::Infeasible => Err(Error::Infeasible),
            QpStatus::IterLimit => Err(Error::NoConvergence("best-response QP hit its iteration limit".into())),
        }
    }
}

fn quad<T: Scalar>(a: &Mat<T>, x: &[T]) -> T {
    a.matvec(x).iter().zip(x).map(|(&u, &v)| u * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve, Algorithm, SolverConfig};

    pub(crate) fn small_game() -> LqGame<f64> {
        let a = Mat::from_rows(&[[1.0, 0.1], [0.0, 1.0]]).unwrap();
        let mut g = LqGame::unconstrained(
            a,
            vec![
                Mat::from_rows(&[[0.005], [0.1]]).unwrap(),
                Mat::from_rows(&[[-0.005], [0.05]]).unwrap(),
            ],
            vec![Mat::identity(2), Mat::from_diag(&[0.5, 2.0])],
            vec![Mat::scalar(1.0), Mat::scalar(2.0)],
            4,
        )
        .unwrap();
        g.du = vec![
            Mat::from_rows(&[[1.0], [-1.0], [0.0], [0.0]]).unwrap(),
            Mat::from_rows(&[[0.0], [0.0], [1.0], [-1.0]]).unwrap(),
        ];
        g.ex = Mat::zeros(4, 2);
        g.du_offset = vec![-1.0; 4];
        g.dx = Mat::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        g.dx_offset = vec![-2.0, -2.0];
        g.validated().unwrap()
    }

    #[test]
    fn constraint_rows_match_simulation() {
        let mut g = small_game();
        g.ex = Mat::from_rows(&[[0.1, 0.2], [0.0, -0.3], [0.5, 0.0], [0.0, 0.0]]).unwrap();
        let c = compile_vi(&g).unwrap();
        let x0 = [0.3, -0.4];
        let u: Vec<f64> = (0..c.n_decisions()).map(|k| (k as f64 * 0.7).sin()).collect();
        let stacked = c.d_mat.matvec(&u);
        let d = c.d_of(&x0);
        let xs = g.rollout(&x0, &u);
        let mut direct = Vec::new();
        for t in 0..g.horizon {
            direct.extend(g.input_constraints(&xs[t], &g.inputs_at(&u, t)));
        }
        for t in 1..=g.horizon {
            direct.extend(g.state_constraints(&xs[t]));
        }
        for (k, v) in direct.iter().enumerate() {
            assert!((stacked[k] + d[k] - v).abs() < 1e-12, "row {k}");
        }
    }

    #[test]
    fn block_splitting_matches_generic() {
        let c = compile_vi(&small_game()).unwrap();
        assert!(c.block_m1().approx_eq(&c.splitting.m1, 1e-12));
    }

    #[test]
    fn unconstrained_equilibrium_solves_the_vi() {
        let g = small_game();
        let c = compile_vi(&g).unwrap();
        let x0 = [0.2, -0.1];
        let u = c.unconstrained_ne_sequence(&x0);
        let f = c.problem(&x0).unwrap().operator(&u);
        assert!(f.iter().all(|v| v.abs() < 1e-8), "{f:?}");
        assert!(c.in_terminal_set(&x0));
        assert!(!c.in_terminal_set(&[5.0, 0.0]));
    }

    #[test]
    fn best_response_to_equilibrium_is_itself() {
        let c = compile_vi(&small_game()).unwrap();
        let x0 = [1.9, 0.5];
        let p = c.problem(&x0).unwrap();
        let cfg = SolverConfig::default().with_tol(1e-11);
        let r = solve(Algorithm::Dr, &p, &cfg, None).unwrap();
        assert!(r.converged());
        for i in 0..2 {
            let br = c.best_response(&x0, i, &r.solution, &QpSettings::default()).unwrap();
            let own = c.game.agent_block(&r.solution, i);
            let err = br.iter().zip(own).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-7, "agent {i}: {err}");
        }
    }
}
