//! Iterative AVI solvers: a Douglas–Rachford splitting iteration and five
//! projection-type baselines, all reporting the natural residual
//! `‖u − Π_C(u − F(u))‖` after every iteration.

mod agraal;
mod dr;
mod nagd;
mod projection;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use agraal::agraal_solve;
pub use dr::{dr_solve, make_dr_splitting, DrSolver, Splitting};
pub use nagd::nagd_solve;
pub use projection::{exgd_solve, pgd_solve, prgd_solve};
pub use trace::{read_residual_csv, write_residual_csv, ResidualRow};

use crate::avi::{AviProblem, Projector};
use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::qp::QpSettings;
use crate::scalar::{all_finite, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dr,
    Pgd,
    Exgd,
    Nagd,
    Prgd,
    Agraal,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Dr,
        Algorithm::Pgd,
        Algorithm::Exgd,
        Algorithm::Nagd,
        Algorithm::Prgd,
        Algorithm::Agraal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dr => "dr",
            Algorithm::Pgd => "pgd",
            Algorithm::Exgd => "exgd",
            Algorithm::Nagd => "nagd",
            Algorithm::Prgd => "prgd",
            Algorithm::Agraal => "agraal",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown algorithm '{s}'")))
    }
}

/// Relaxation parameters `λ_k` of the splitting iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum Relaxation<T> {
    Constant(T),
    /// `λ_k` is the k-th entry; the last entry repeats.
    Schedule(Vec<T>),
}

impl<T: Scalar> Relaxation<T> {
    pub fn at(&self, k: usize) -> T {
        match self {
            Relaxation::Constant(v) => *v,
            Relaxation::Schedule(v) => v[k.min(v.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: &T| *v > T::zero() && *v <= T::one();
        let valid = match self {
            Relaxation::Constant(v) => ok(v),
            Relaxation::Schedule(v) => !v.is_empty() && v.iter().all(ok),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidConfig("relaxation must lie in (0, 1]".into()))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig<T> {
    /// Stop once the natural residual is at most this.
    pub tol: T,
    pub max_iter: usize,
    pub relaxation: Relaxation<T>,
    /// Metric of the splitting iteration; identity when `None`.
    pub h: Option<Mat<T>>,
    /// Fixed stepsize for PGD, EXGD and PRGD; each has its own default.
    pub step: Option<T>,
    pub qp: QpSettings<T>,
    pub record_iterates: bool,
}

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_RELAXATION: f64 = 0.5;

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            tol: T::lit(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
            relaxation: Relaxation::Constant(T::lit(DEFAULT_RELAXATION)),
            h: None,
            step: None,
            qp: QpSettings::default(),
            record_iterates: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        self.relaxation.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    IterLimit,
}

#[derive(Clone, Debug)]
pub struct SolverReport<T> {
    pub solution: Vec<T>,
    /// Natural residual after each iteration.
    pub residuals: Vec<T>,
    /// Seconds since the start of the run at each residual.
    pub times: Vec<f64>,
    /// Iterates, when requested in the config.
    pub iterates: Vec<Vec<T>>,
    pub iterations: usize,
    pub status: SolverStatus,
    pub wall_time: f64,
}

impl<T: Scalar> SolverReport<T> {
    pub fn final_residual(&self) -> T {
        *self.residuals.last().expect("at least one residual")
    }

    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

/// Runs one algorithm with its default parameters.
pub fn solve<T: Scalar>(
    algorithm: Algorithm,
    p: &AviProblem<T>,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<SolverReport<T>> {
    match algorithm {
        Algorithm::Dr => {
            let mut s = make_dr_splitting(&p.m)?;
            if let Some(h) = &cfg.h {
                s.h = h.clone();
            }
            dr_solve(p, &s, cfg, warm)
        }
        Algorithm::Pgd => pgd_solve(p, cfg, warm),
        Algorithm::Exgd => exgd_solve(p, cfg, warm),
        Algorithm::Nagd => nagd_solve(p, cfg, warm),
        Algorithm::Prgd => prgd_solve(p, cfg, warm),
        Algorithm::Agraal => agraal_solve(p, cfg, warm),
    }
}

fn initial_point<T: Scalar>(p: &AviProblem<T>, warm: Option<&[T]>) -> Result<Vec<T>> {
    match warm {
        Some(w) if w.len() != p.dim() => Err(Error::DimensionMismatch(format!(
            "warm start of length {} for a problem of dimension {}",
            w.len(),
            p.dim()
        ))),
        Some(w) => Ok(w.to_vec()),
        None => Ok(vec![T::zero(); p.dim()]),
    }
}

/// Shared bookkeeping: residual evaluation, timing, stopping.
struct Monitor<'a, T> {
    p: &'a AviProblem<T>,
    cfg: &'a SolverConfig<T>,
    projector: Projector<T>,
    start: Instant,
    residuals: Vec<T>,
    times: Vec<f64>,
    iterates: Vec<Vec<T>>,
}

enum Step {
    Continue,
    Stop(SolverStatus),
}

impl<'a, T: Scalar> Monitor<'a, T> {
    fn new(p: &'a AviProblem<T>, cfg: &'a SolverConfig<T>) -> Result<Self> {
        cfg.check()?;
        Ok(Monitor {
            p,
            cfg,
            projector: Projector::new(p.dim()),
            start: Instant::now(),
            residuals: Vec::new(),
            times: Vec::new(),
            iterates: Vec::new(),
        })
    }

    fn project(&mut self, v: &[T]) -> Result<Vec<T>> {
        self.projector.project(&self.p.set, v)
    }

    /// Records the residual at `u`, the candidate solution of the iteration
    /// just completed.
    fn record(&mut self, u: &[T]) -> Result<Step> {
        let r = if all_finite(u) {
            self.projector.natural_residual(self.p, u, T::one())?
        } else {
            T::nan()
        };
        self.residuals.push(r);
        self.times.push(self.start.elapsed().as_secs_f64());
        if self.cfg.record_iterates {
            self.iterates.push(u.to_vec());
        }
        if r <= self.cfg.tol {
            Ok(Step::Stop(SolverStatus::Converged))
        } else if !r.is_finite() || self.residuals.len() >= self.cfg.max_iter {
            Ok(Step::Stop(SolverStatus::IterLimit))
        } else {
            Ok(Step::Continue)
        }
    }

    fn finish(self, solution: Vec<T>, status: SolverStatus) -> SolverReport<T> {
        SolverReport {
            solution,
            iterations: self.residuals.len(),
            residuals: self.residuals,
            times: self.times,
            iterates: self.iterates,
            status,
            wall_time: self.start.elapsed().as_secs_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("graal".parse::<Algorithm>().is_err());
    }

    #[test]
    fn relaxation_schedule_repeats_last() {
        let r = Relaxation::Schedule(vec![0.2, 0.7]);
        assert_eq!(r.at(0), 0.2);
        assert_eq!(r.at(5), 0.7);
        assert!(Relaxation::Constant(1.5).validate().is_err());
        assert!(Relaxation::<f64>::Schedule(vec![]).validate().is_err());
    }
}
