//! Receding-horizon loop: solve the game VI at the measured state, apply the
//! first stage of every agent's sequence, shift, repeat.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::avi::natural_residual;
use crate::error::{Error, Result};
use crate::game::CompiledGameVi;
use crate::scalar::Scalar;
use crate::solvers::{DrSolver, SolverConfig, SolverReport, SolverStatus};

/// Drops each agent's first input, shifts the rest forward and appends the
/// equilibrium feedback at the predicted terminal state `φ(T, prev_x, prev)`.
pub fn shift_warm_start<T: Scalar>(prev: &[T], c: &CompiledGameVi<T>, prev_x: &[T]) -> Vec<T> {
    let g = &c.game;
    let x_t = g.rollout(prev_x, prev).pop().expect("nonempty rollout");
    let tail = c.feedback(&x_t);
    let mut out = Vec::with_capacity(prev.len());
    for (i, ki) in tail.iter().enumerate() {
        let m = g.input_dim(i);
        out.extend_from_slice(&g.agent_block(prev, i)[m..]);
        out.extend_from_slice(ki);
    }
    out
}

/// DR solver for the game VI, set up once; the constraint matrix does not
/// depend on the state so every step reuses the same factorizations.
#[derive(Clone, Debug)]
pub struct RhcController<'a, T> {
    pub compiled: &'a CompiledGameVi<T>,
    dr: DrSolver<T>,
    /// Skip the solve when the state is in the terminal set and the warm
    /// start already meets the tolerance.
    pub terminal_shortcut: bool,
}

impl<'a, T: Scalar> RhcController<'a, T> {
    pub fn new(compiled: &'a CompiledGameVi<T>) -> Result<Self> {
        let p = compiled.problem(&vec![T::zero(); compiled.game.n_states()])?;
        Ok(RhcController {
            compiled,
            dr: DrSolver::new(&p, &compiled.splitting)?,
            terminal_shortcut: true,
        })
    }

    /// Solves the VI at `x` from `warm` and returns the first-stage inputs
    /// of every agent with the solver report.
    pub fn step(
        &self,
        x: &[T],
        warm: &[T],
        cfg: &SolverConfig<T>,
    ) -> Result<(Vec<Vec<T>>, SolverReport<T>)> {
        let c = self.compiled;
        let p = c.problem(x)?;
        if self.terminal_shortcut && c.in_terminal_set(x) {
            let start = Instant::now();
            let r = natural_residual(&p, warm, T::one())?;
            if r <= cfg.tol {
                let report = SolverReport {
                    solution: warm.to_vec(),
                    residuals: vec![r],
                    times: vec![start.elapsed().as_secs_f64()],
                    iterates: Vec::new(),
                    iterations: 1,
                    status: SolverStatus::Converged,
                    wall_time: start.elapsed().as_secs_f64(),
                };
                return Ok((c.game.inputs_at(warm, 0), report));
            }
        }
        let report = self.dr.solve(&p, cfg, Some(warm))?;
        Ok((c.game.inputs_at(&report.solution, 0), report))
    }

    /// Warm start for the first step: zero when feasible, otherwise one
    /// Gauss–Seidel sweep of best responses starting from zero.
    pub fn initial_warm_start(&self, x0: &[T], cfg: &SolverConfig<T>) -> Vec<T> {
        let c = self.compiled;
        let zero = vec![T::zero(); c.n_decisions()];
        let p = match c.problem(x0) {
            Ok(p) => p,
            Err(_) => return zero,
        };
        if p.set.max_violation(&zero) <= T::zero() {
            return zero;
        }
        let mut u = zero.clone();
        for i in 0..c.game.n_agents() {
            match c.best_response(x0, i, &u, &cfg.qp) {
                Ok(ui) => u = c.substitute(&u, i, &ui),
                Err(_) => return zero,
            }
        }
        u
    }

    pub fn simulate(&self, x0: &[T], steps: usize, cfg: &SolverConfig<T>) -> Result<ClosedLoopTrace<T>> {
        let g = &self.compiled.game;
        let mut trace = ClosedLoopTrace {
            states: vec![x0.to_vec()],
            inputs: Vec::with_capacity(steps),
            iterations: Vec::with_capacity(steps),
            residuals: Vec::with_capacity(steps),
            margins: Vec::with_capacity(steps),
            converged: Vec::with_capacity(steps),
        };
        let mut warm = self.initial_warm_start(x0, cfg);
        let mut x = x0.to_vec();
        for t in 0..steps {
            let (applied, report) = self.step(&x, &warm, cfg).map_err(|e| Error::AtStep {
                step: t,
                source: Box::new(e),
            })?;
            let mut margins: Vec<T> = g.input_constraints(&x, &applied).into_iter().map(|v| -v).collect();
            margins.extend(g.state_constraints(&x).into_iter().map(|v| -v));
            let next = g.step(&x, &applied);
            warm = shift_warm_start(&report.solution, self.compiled, &x);
            trace.inputs.push(applied.concat());
            trace.iterations.push(report.iterations);
            trace.residuals.push(report.final_residual());
            trace.margins.push(margins);
            trace.converged.push(report.converged());
            trace.states.push(next.clone());
            x = next;
        }
        Ok(trace)
    }
}

/// Convenience wrapper: a controller with the default shortcut setting.
pub fn simulate<T: Scalar>(
    c: &CompiledGameVi<T>,
    x0: &[T],
    steps: usize,
    cfg: &SolverConfig<T>,
) -> Result<ClosedLoopTrace<T>> {
    RhcController::new(c)?.simulate(x0, steps, cfg)
}

/// One closed-loop run. `states` has one more entry than the per-step lists.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopTrace<T> {
    pub states: Vec<Vec<T>>,
    /// Applied first-stage inputs `col(u_i[0])`.
    pub inputs: Vec<Vec<T>>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<T>,
    /// Negated stage-constraint values at each step: input rows at
    /// `(x[t], u[t])`, then state rows at `x[t]`.
    pub margins: Vec<Vec<T>>,
    /// `false` where the solver stopped on its iteration limit.
    pub converged: Vec<bool>,
}

impl<T: Scalar> ClosedLoopTrace<T> {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn min_margin(&self) -> T {
        self.margins
            .iter()
            .flatten()
            .fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn records(&self) -> Vec<StepRecord> {
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect();
        (0..self.steps())
            .map(|t| StepRecord {
                t,
                x: f(&self.states[t]),
                u: f(&self.inputs[t]),
                iterations: self.iterations[t],
                residual: self.residuals[t].to_f64_lossy(),
                margins: f(&self.margins[t]),
            })
            .collect()
    }
}

/// One entry of the trace JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub margins: Vec<f64>,
}

pub fn write_trace_json<W: Write>(w: W, records: &[StepRecord]) -> Result<()> {
    serde_json::to_writer_pretty(w, records)?;
    Ok(())
}

pub fn read_trace_json<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRow {
    pub t: usize,
    pub iterations: usize,
}

pub fn write_iterations_csv<W: Write>(w: W, iterations: &[usize]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (t, &iterations) in iterations.iter().enumerate() {
        wr.serialize(IterationRow { t, iterations })?;
    }
    if iterations.is_empty() {
        wr.write_record(["t", "iterations"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_iterations_csv<R: Read>(r: R) -> Result<Vec<IterationRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| Ok(row?)).collect()
}
