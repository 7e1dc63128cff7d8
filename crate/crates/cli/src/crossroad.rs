use std::process::ExitCode;

use anyhow::Result;
use lqvi::game::compile_vi;
use lqvi::rhc::{write_iterations_csv, write_trace_json, RhcController};
use lqvi::scenario::{build_crossroad, default_15_vehicle_spec, write_distance_velocity_csv, CrossroadSpec};
use lqvi::solvers::SolverConfig;
use serde::Serialize;

use crate::output::{create, prepare_dir, read_input, write_json, ErrorReport};
use crate::{CrossroadArgs, InitialState, UsageError};

#[derive(Serialize)]
struct Metadata<'a> {
    spec: &'a CrossroadSpec,
    predecessors: &'a [Option<usize>],
    /// Numeric parameters of the built-in scenario are chosen defaults, not
    /// measured values.
    builtin_defaults: bool,
    initial_state: &'a [f64],
    steps: usize,
    tol: f64,
    terminal_shortcut: bool,
    all_converged: bool,
    min_margin: f64,
    final_state_norm: f64,
}

pub fn run(args: &CrossroadArgs) -> Result<ExitCode> {
    let mut spec = match &args.spec {
        Some(path) => CrossroadSpec::from_json(&read_input(path)?)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        None => default_15_vehicle_spec(),
    };
    if let Some(k) = args.vehicles {
        spec = spec.prefix(k).map_err(|e| UsageError(e.to_string()))?;
    }
    if let Some(t) = args.horizon {
        if t == 0 {
            return Err(UsageError("--horizon must be at least 1".into()).into());
        }
        spec.params.horizon = t;
    }
    prepare_dir(&args.out_dir)?;
    let error_path = args.out_dir.join("error.json");

    let prepared = build_crossroad(&spec).and_then(|cr| compile_vi(&cr.game).map(|c| (cr, c)));
    let (cr, compiled) = match prepared {
        Ok(v) => v,
        Err(e) => {
            write_json(&error_path, &ErrorReport::from_error(&e))?;
            eprintln!("error: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    let x0 = match args.x0 {
        InitialState::Default => cr.default_initial_state(),
        InitialState::Zero => vec![0.0; cr.game.n_states()],
    };
    let cfg = SolverConfig::default()
        .with_tol(args.tol)
        .with_max_iter(args.max_iter);
    let mut controller = RhcController::new(&compiled)?;
    controller.terminal_shortcut = !args.no_terminal_shortcut;
    let trace = match controller.simulate(&x0, args.steps, &cfg) {
        Ok(t) => t,
        Err(e) => {
            write_json(&error_path, &ErrorReport::from_error(&e))?;
            eprintln!("error: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };

    write_trace_json(create(&args.out_dir.join("trace.json"))?, &trace.records())?;
    write_iterations_csv(create(&args.out_dir.join("iterations.csv"))?, &trace.iterations)?;
    write_distance_velocity_csv(
        create(&args.out_dir.join("distance_velocity.csv"))?,
        &cr.distance_velocity_rows(&trace),
    )?;
    let last = trace.states.last().expect("initial state recorded");
    write_json(
        &args.out_dir.join("metadata.json"),
        &Metadata {
            spec: &spec,
            predecessors: &cr.predecessors,
            builtin_defaults: args.spec.is_none(),
            initial_state: &x0,
            steps: args.steps,
            tol: args.tol,
            terminal_shortcut: controller.terminal_shortcut,
            all_converged: trace.all_converged(),
            min_margin: if trace.steps() == 0 { 0.0 } else { trace.min_margin() },
            final_state_norm: last.iter().map(|v| v * v).sum::<f64>().sqrt(),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}
