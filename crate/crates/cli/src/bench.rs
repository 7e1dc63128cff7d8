use std::process::ExitCode;

use anyhow::{Context, Result};
use lqvi::scenario::random_avi;
use lqvi::solvers::{solve, write_residual_csv, Algorithm, ResidualRow, SolverConfig};
use lqvi::AviProblem64;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{create, prepare_dir, write_json};
use crate::{BenchArgs, UsageError};

#[derive(Serialize)]
struct Run {
    instance: usize,
    seed: u64,
    algorithm: Algorithm,
    /// `converged`, `iter_limit` or `error`.
    status: &'static str,
    iterations: usize,
    final_residual: Option<f64>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct Median {
    algorithm: Algorithm,
    /// Over runs that converged; `None` if none did.
    iterations: Option<f64>,
    wall_time_s: Option<f64>,
    converged: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    instances: usize,
    n: usize,
    m: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
    algorithms: &'a [Algorithm],
    timing: bool,
    runs: Vec<Run>,
    medians: Vec<Median>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    })
}

fn run_instance(args: &BenchArgs, instance: usize) -> (Vec<Run>, Vec<ResidualRow>) {
    let seed = args.seed.wrapping_add(instance as u64);
    let cfg = SolverConfig::default()
        .with_tol(args.tol)
        .with_max_iter(args.max_iter);
    let problem: lqvi::Result<AviProblem64> = random_avi(args.n, args.m, seed);
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &algorithm in &args.algos {
        let outcome = problem
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|p| solve(algorithm, p, &cfg, None).map_err(|e| e.to_string()));
        match outcome {
            Ok(r) => {
                rows.extend(ResidualRow::from_report(algorithm, instance, &r, args.timing));
                runs.push(Run {
                    instance,
                    seed,
                    algorithm,
                    status: if r.converged() { "converged" } else { "iter_limit" },
                    iterations: r.iterations,
                    final_residual: Some(r.final_residual()),
                    wall_time_s: if args.timing { r.wall_time } else { 0.0 },
                    error: None,
                });
            }
            Err(e) => runs.push(Run {
                instance,
                seed,
                algorithm,
                status: "error",
                iterations: 0,
                final_residual: None,
                wall_time_s: 0.0,
                error: Some(e),
            }),
        }
    }
    (runs, rows)
}

pub fn run(args: &BenchArgs) -> Result<ExitCode> {
    if args.n == 0 || args.m == 0 || args.instances == 0 {
        return Err(UsageError("--instances, --n and --m must be positive".into()).into());
    }
    if args.algos.is_empty() {
        return Err(UsageError("no algorithms selected".into()).into());
    }
    prepare_dir(&args.out_dir)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building the worker pool")?;
    // collect keeps instance order regardless of scheduling
    let results: Vec<(Vec<Run>, Vec<ResidualRow>)> = pool.install(|| {
        (0..args.instances)
            .into_par_iter()
            .map(|k| run_instance(args, k))
            .collect()
    });
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (r, t) in results {
        runs.extend(r);
        rows.extend(t);
    }
    write_residual_csv(create(&args.out_dir.join("residuals.csv"))?, &rows)?;

    let medians = args
        .algos
        .iter()
        .map(|&algorithm| {
            let ok: Vec<&Run> = runs
                .iter()
                .filter(|r| r.algorithm == algorithm && r.status == "converged")
                .collect();
            Median {
                algorithm,
                iterations: median(ok.iter().map(|r| r.iterations as f64).collect()),
                wall_time_s: median(ok.iter().map(|r| r.wall_time_s).collect()),
                converged: ok.len(),
            }
        })
        .collect();
    let failed = runs.iter().any(|r| r.status == "error");
    for r in runs.iter().filter(|r| r.status == "error") {
        eprintln!(
            "instance {} ({}): {}",
            r.instance,
            r.algorithm,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let summary = Summary {
        instances: args.instances,
        n: args.n,
        m: args.m,
        seed: args.seed,
        tol: args.tol,
        max_iter: args.max_iter,
        algorithms: &args.algos,
        timing: args.timing,
        runs,
        medians,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
