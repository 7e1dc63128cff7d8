use std::process::ExitCode;

use anyhow::Result;
use lqvi::avi::{monotonicity_constants, validate as validate_avi, AviProblem};
use lqvi::game::{check_spectral_condition, compile_vi, GameDiagnostics, LqGame, SpectralCheck};
use lqvi::solvers::{solve, Algorithm, SolverConfig, SolverStatus};
use serde::Serialize;

use crate::output::{read_input, write_json, ErrorReport};
use crate::{FileKind, SolveArgs, UsageError, ValidateArgs};

#[derive(Serialize)]
struct SolutionReport {
    algorithm: Algorithm,
    solution: Vec<f64>,
    residual: f64,
    iterations: usize,
    status: SolverStatus,
}

fn emit<T: Serialize>(out: Option<&std::path::PathBuf>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

pub fn run(args: &SolveArgs) -> Result<ExitCode> {
    let text = read_input(&args.problem)?;
    let problem = AviProblem::from_json(&text)
        .map_err(|e| UsageError(format!("{}: {e}", args.problem.display())))?;
    let cfg = SolverConfig::default()
        .with_tol(args.tol)
        .with_max_iter(args.max_iter);
    match solve(args.algo, &problem, &cfg, None) {
        Ok(r) if r.converged() => {
            emit(
                args.out.as_ref(),
                &SolutionReport {
                    algorithm: args.algo,
                    residual: r.final_residual(),
                    iterations: r.iterations,
                    status: r.status,
                    solution: r.solution,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Ok(r) => {
            emit(
                args.out.as_ref(),
                &ErrorReport {
                    error: "iter_limit".into(),
                    message: format!(
                        "no convergence in {} iterations (residual {:e})",
                        r.iterations,
                        r.final_residual()
                    ),
                    step: None,
                },
            )?;
            Ok(ExitCode::FAILURE)
        }
        Err(e) => {
            emit(args.out.as_ref(), &ErrorReport::from_error(&e))?;
            Ok(ExitCode::FAILURE)
        }
    }
}

#[derive(Serialize)]
struct GameReport {
    assumptions: GameDiagnostics,
    spectral: Option<SpectralCheck>,
    spectral_error: Option<String>,
    compiled: bool,
    compile_error: Option<String>,
    /// Strong monotonicity modulus of the compiled VI.
    mu: Option<f64>,
    decisions: Option<usize>,
    constraints: Option<usize>,
}

pub fn validate(args: &ValidateArgs) -> Result<ExitCode> {
    let text = read_input(&args.file)?;
    let parse_err = |e: lqvi::Error| UsageError(format!("{}: {e}", args.file.display()));
    let ok = match args.kind {
        FileKind::Avi => {
            let p = AviProblem::from_json(&text).map_err(parse_err)?;
            let d = validate_avi(&p);
            println!("{}", serde_json::to_string_pretty(&d)?);
            d.ok()
        }
        FileKind::Game => {
            let g = LqGame::from_json(&text).map_err(parse_err)?;
            let (spectral, spectral_error) = match check_spectral_condition(&g) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let compiled = compile_vi(&g);
            let report = GameReport {
                assumptions: g.diagnostics(),
                spectral,
                spectral_error,
                compiled: compiled.is_ok(),
                mu: compiled.as_ref().ok().map(|c| monotonicity_constants(&c.m).mu),
                decisions: compiled.as_ref().ok().map(|c| c.n_decisions()),
                constraints: compiled.as_ref().ok().map(|c| c.d_mat.rows()),
                compile_error: compiled.err().map(|e| e.to_string()),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            report.compiled
                && report.assumptions.all_hold()
                && report.spectral.as_ref().is_some_and(|s| s.holds())
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
