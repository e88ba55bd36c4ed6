//! The four subcommands.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use singctrl_core::analysis::{
    convergence_study, experiment_error, rho_sweep, run_experiment, Experiment, ExperimentSetup,
    LinearFit, SwitchRecord,
};
use singctrl_core::ocp::Mesh;
use singctrl_core::solver::{SolverConfig, Termination};
use singctrl_core::tv::TvWeights;

use crate::config::{config, Oracle, RunConfig};
use crate::output::{create_dir, num, numbered, opt, write_csv, write_json, write_text};
use crate::CliError;

fn setup(cfg: &RunConfig, mesh: Mesh, weights: Vec<f64>) -> Result<ExperimentSetup, CliError> {
    let solver = SolverConfig {
        trace_every: Some(1),
        max_iters: cfg.max_iters,
        ..SolverConfig::with_tol(cfg.tol)
    };
    let weights = TvWeights::new(weights).map_err(config)?;
    ExperimentSetup::new(
        cfg.problem.build()?,
        mesh,
        weights,
        cfg.backend,
        solver,
        &cfg.initial_guess()?,
    )
    .map_err(config)
}

fn mesh(cfg: &RunConfig) -> Result<Mesh, CliError> {
    let horizon = cfg.problem.build()?.horizon();
    Mesh::new(horizon, cfg.intervals).map_err(config)
}

fn solver_failure(exp: &Experiment) -> Option<CliError> {
    let s = &exp.report.solver;
    (s.termination != Termination::Converged).then(|| {
        CliError::Solver(format!(
            "stopped with {} at stationarity {:e}",
            s.termination, s.stationarity
        ))
    })
}

/// Writes trajectory.csv, report.json and solver.log for one run.
fn emit_run(dir: &Path, cfg: &RunConfig, exp: &Experiment) -> Result<(), CliError> {
    create_dir(dir)?;
    let traj = &exp.trajectory;
    let (m, n) = (traj.controls.nrows(), traj.states.nrows());
    let big_n = exp.mesh.intervals();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("u", m))
        .chain(numbered("x", n))
        .chain(numbered("lambda", n))
        .chain(numbered("phi", m))
        .collect();
    let rows: Vec<Vec<String>> = (0..=big_n)
        .map(|k| {
            // controls, adjoints and switching functions end one node early
            let interior = k < big_n;
            let mut row = vec![num(exp.mesh.node(k))];
            row.extend((0..m).map(|j| opt(interior.then(|| traj.controls[[j, k]]))));
            row.extend((0..n).map(|i| num(traj.states[[i, k]])));
            row.extend((0..n).map(|i| opt(interior.then(|| traj.adjoints[[i, k]]))));
            row.extend((0..m).map(|j| opt(interior.then(|| exp.switching[[j, k]]))));
            row
        })
        .collect();
    write_csv(&dir.join("trajectory.csv"), &header, &rows)?;
    write_json(&dir.join("report.json"), &exp.report)?;
    write_text(&dir.join("solver.log"), &solver_log(cfg, exp))
}

fn solver_log(cfg: &RunConfig, exp: &Experiment) -> String {
    let r = &exp.report;
    let mut log = String::new();
    let rho: Vec<String> = r.channels.iter().map(|c| c.rho.to_string()).collect();
    let _ = writeln!(
        log,
        "problem {} intervals {} tol {:e} rho [{}] backend {}",
        cfg.problem.id(),
        r.intervals,
        cfg.tol,
        rho.join(", "),
        r.solver.backend
    );
    let _ = writeln!(
        log,
        "{:>7} {:<20} {:>24} {:>12} {:>12} {:>7}",
        "iter", "phase", "objective", "stationarity", "step", "free"
    );
    for rec in &exp.trace {
        let phase = serde_json::to_value(rec.phase)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            log,
            "{:>7} {:<20} {:>24.16e} {:>12.4e} {:>12.4e} {:>7}",
            rec.iteration, phase, rec.objective, rec.stationarity, rec.step, rec.free
        );
    }
    let s = &r.solver;
    let _ = writeln!(
        log,
        "{} after {} iterations ({} gradient projection, {} on faces), {} evaluations, stationarity {:e}, {:.3} s",
        s.termination, s.iterations, s.gradient_projection_iterations, s.face_iterations, s.evaluations, s.stationarity, s.elapsed_seconds
    );
    log
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let setup = setup(cfg, mesh(cfg)?, cfg.channel_weights()?)?;
    let oracle = cfg.problem.oracle();
    let reference = oracle.map(Oracle::reference);
    let exp = run_experiment(&setup, reference.as_deref())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    emit_run(&cfg.out, cfg, &exp)?;
    match solver_failure(&exp) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Subdirectory name for one penalty value.
pub fn rho_dir(rho: f64) -> String {
    format!("rho_{rho}")
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let mut seen = cfg.rho.clone();
    seen.sort_by(f64::total_cmp);
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(config("rho: sweep values must be distinct"));
    }
    let m = cfg.channels()?;
    let base = setup(cfg, mesh(cfg)?, vec![0.0; m])?;
    let reference = cfg.problem.oracle().map(Oracle::reference);
    create_dir(&cfg.out)?;
    let results = rho_sweep(&base, &cfg.rho, reference.as_deref());

    let mut header = vec![
        "rho".to_string(),
        "status".into(),
        "objective".into(),
        "penalized_objective".into(),
    ];
    for j in 1..=m {
        for col in [
            "l1_error",
            "linf_error",
            "switch",
            "oscillating",
            "total_variation",
        ] {
            header.push(format!("{col}_{j}"));
        }
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&rho, result) in cfg.rho.iter().zip(&results) {
        let mut row = vec![num(rho)];
        match result {
            Ok(exp) => {
                emit_run(&cfg.out.join(rho_dir(rho)), cfg, exp)?;
                if let Some(e) = solver_failure(exp) {
                    failures.push(format!("rho = {rho}: {e}"));
                }
                let r = &exp.report;
                row.extend([
                    r.solver.termination.to_string(),
                    num(r.objective),
                    num(r.penalized_objective),
                ]);
                for c in &r.channels {
                    row.extend([
                        opt(c.l1_error),
                        opt(c.linf_error),
                        opt(c.switches.get(1).map(|s| s.time)),
                        c.oscillating.to_string(),
                        num(c.total_variation),
                    ]);
                }
            }
            Err(e) => {
                failures.push(format!("rho = {rho}: {e}"));
                row.push("error".into());
                row.resize(header.len(), String::new());
            }
        }
        rows.push(row);
    }
    write_csv(&cfg.out.join("sweep.csv"), &header, &rows)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failures.join("; ")))
    }
}

#[derive(Serialize)]
struct FitReport {
    all: LinearFit,
    trimmed: Option<LinearFit>,
    outlier_steps: Vec<f64>,
}

pub fn convergence(cfg: &RunConfig) -> Result<(), CliError> {
    let oracle = cfg.problem.oracle().ok_or_else(|| {
        config(format!(
            "problem: no analytic oracle for {}",
            cfg.problem.id()
        ))
    })?;
    let weights = cfg.channel_weights()?;
    let horizon = cfg.problem.build()?.horizon();
    let reference = oracle.reference();
    let table = convergence_study(horizon, &cfg.steps, |mesh| {
        let s = setup(cfg, *mesh, weights.clone())
            .map_err(|e| singctrl_core::analysis::AnalysisError::InvalidInput(e.to_string()))?;
        experiment_error(&s, &*reference)
    })
    .map_err(|e| match e {
        singctrl_core::analysis::AnalysisError::InvalidInput(msg) => {
            config(format!("steps: {msg}"))
        }
        other => CliError::Solver(other.to_string()),
    })?;
    create_dir(&cfg.out)?;
    let header: Vec<String> = ["h", "err_h", "ratio", "log2ratio"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![num(r.step), num(r.error), opt(r.ratio), opt(r.log2_ratio)])
        .collect();
    write_csv(&cfg.out.join("convergence.csv"), &header, &rows)?;
    match table.fit_all {
        Some(all) => {
            let outlier_steps = table
                .rows
                .iter()
                .zip(&table.outliers)
                .filter(|(_, o)| **o)
                .map(|(r, _)| r.step)
                .collect();
            write_json(
                &cfg.out.join("fit.json"),
                &FitReport {
                    all,
                    trimmed: table.fit_trimmed,
                    outlier_steps,
                },
            )
        }
        None => {
            eprintln!("fewer than two meshes; fit omitted");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CompareReport<'a> {
    problem: &'static str,
    case: Option<&'static str>,
    intervals: usize,
    step: f64,
    l1_error: Option<f64>,
    linf_error: Option<f64>,
    oscillating: bool,
    detected_switches: &'a [SwitchRecord],
    exact_switches: Vec<f64>,
    objective: f64,
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let oracle = cfg.problem.oracle().ok_or_else(|| {
        config(format!(
            "problem: no analytic oracle for {}",
            cfg.problem.id()
        ))
    })?;
    let setup = setup(cfg, mesh(cfg)?, cfg.channel_weights()?)?;
    let reference = oracle.reference();
    let exp =
        run_experiment(&setup, Some(&*reference)).map_err(|e| CliError::Solver(e.to_string()))?;
    create_dir(&cfg.out)?;
    let traj = &exp.trajectory;
    let n = traj.states.nrows();
    let big_n = exp.mesh.intervals();
    let mut header: Vec<String> = ["t", "u_num", "u_exact", "diff"].map(String::from).to_vec();
    for i in 1..=n {
        header.push(format!("x_{i}_num"));
        header.push(format!("x_{i}_exact"));
    }
    let rows: Vec<Vec<String>> = (0..=big_n)
        .map(|k| {
            let t = exp.mesh.node(k);
            let mut row = vec![num(t)];
            if k < big_n {
                let (u, e) = (traj.controls[[0, k]], oracle.control(t));
                row.extend([num(u), num(e), num(u - e)]);
            } else {
                row.extend([String::new(), String::new(), String::new()]);
            }
            for (i, xe) in oracle.states(t).into_iter().enumerate() {
                row.extend([num(traj.states[[i, k]]), num(xe)]);
            }
            row
        })
        .collect();
    write_csv(&cfg.out.join("compare.csv"), &header, &rows)?;
    let c = &exp.report.channels[0];
    let report = CompareReport {
        problem: cfg.problem.id(),
        case: cfg.case.map(|c| c.tag()),
        intervals: big_n,
        step: exp.mesh.step(),
        l1_error: c.l1_error,
        linf_error: c.linf_error,
        oscillating: c.oscillating,
        detected_switches: &c.switches,
        exact_switches: oracle.switches(),
        objective: exp.report.objective,
    };
    write_json(&cfg.out.join("errors.json"), &report)?;
    match solver_failure(&exp) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
