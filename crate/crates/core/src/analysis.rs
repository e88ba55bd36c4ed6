//! Error norms, switch and oscillation diagnostics, penalty sweeps and mesh
//! convergence studies.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocp::{reduced_cost, ControlProblem, Mesh, OcpError, Trajectory};
use crate::solver::prox_tv::prox_tv_backend;
use crate::solver::{solve, IterationRecord, SolverConfig, SolverError, Termination};
use crate::tv::{assemble_nlp, total_variation, StackLayout, TvError, TvWeights};

/// Oscillation flag threshold on the reversal count.
pub const OSCILLATION_THRESHOLD: usize = 5;
/// Level tolerance as a fraction of the control range.
pub const SWITCH_FRACTION: f64 = 1e-3;
/// Jump size counted as a reversal, as a fraction of the control range.
pub const OSCILLATION_FRACTION: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Penalty(#[from] TvError),
    #[error(transparent)]
    Evaluation(#[from] OcpError),
    #[error("solve on mesh h = {step} failed: {source}")]
    MeshSolve {
        step: f64,
        source: Box<AnalysisError>,
    },
    #[error("{0}")]
    InvalidInput(String),
}

// ---------------------------------------------------------------------------
// error norms

/// `Σ h |u_k - u*(t_k)|` with the reference sampled at left endpoints.
pub fn grid_l1_error(u: &[f64], exact: impl Fn(f64) -> f64, mesh: &Mesh) -> f64 {
    let h = mesh.step();
    u.iter()
        .enumerate()
        .map(|(k, v)| h * (v - exact(mesh.node(k))).abs())
        .sum()
}

pub fn grid_linf_error(u: &[f64], exact: impl Fn(f64) -> f64, mesh: &Mesh) -> f64 {
    u.iter()
        .enumerate()
        .map(|(k, v)| (v - exact(mesh.node(k))).abs())
        .fold(0.0, f64::max)
}

/// `Σ h |a_k - b_k|`.
pub fn grid_l1_distance(a: &[f64], b: &[f64], mesh: &Mesh) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| mesh.step() * (x - y).abs())
        .sum()
}

// ---------------------------------------------------------------------------
// switches

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// Within tolerance of the given target value.
    Target(f64),
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub time: f64,
    pub from: Option<Level>,
    pub to: Level,
}

fn classify(v: f64, levels: &[f64], eps: f64) -> Level {
    levels
        .iter()
        .map(|l| (l, (v - l).abs()))
        .filter(|(_, d)| *d <= eps)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(Level::Interior, |(l, _)| Level::Target(*l))
}

/// One record for the first node and one at every change of classification.
pub fn detect_switches(u: &[f64], mesh: &Mesh, levels: &[f64], eps: f64) -> Vec<SwitchRecord> {
    assert!(eps > 0.0, "switch tolerance must be positive");
    let mut out: Vec<SwitchRecord> = Vec::new();
    let mut current: Option<Level> = None;
    for (k, v) in u.iter().enumerate() {
        let level = classify(*v, levels, eps);
        if current != Some(level) {
            out.push(SwitchRecord {
                time: mesh.node(k),
                from: current,
                to: level,
            });
            current = Some(level);
        }
    }
    out
}

/// Changes between distinct target levels, ignoring interior passages. The
/// time is the node at which the new target is reached.
pub fn bang_transitions(records: &[SwitchRecord]) -> Vec<SwitchRecord> {
    let mut out = Vec::new();
    let mut last: Option<Level> = None;
    for r in records.iter().filter(|r| r.to != Level::Interior) {
        if last.is_some() && last != Some(r.to) {
            out.push(SwitchRecord {
                time: r.time,
                from: last,
                to: r.to,
            });
        }
        last = Some(r.to);
    }
    out
}

/// First node at which the control sits at `level`.
pub fn first_arrival(records: &[SwitchRecord], level: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.to == Level::Target(level))
        .map(|r| r.time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oscillation {
    pub count: usize,
    pub flagged: bool,
}

/// Differences exceeding `delta`, as `(node the jump lands on, direction)`.
fn jumps(u: &[f64], delta: f64) -> Vec<(usize, bool)> {
    u.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > delta)
        .map(|(k, w)| (k + 1, w[1] > w[0]))
        .collect()
}

/// Pairs of successive jumps (small differences skipped) that change direction.
fn reversals(u: &[f64], delta: f64) -> Vec<(usize, usize)> {
    jumps(u, delta)
        .windows(2)
        .filter(|p| p[0].1 != p[1].1)
        .map(|p| (p[0].0, p[1].0))
        .collect()
}

/// Direction reversals between successive differences larger than `delta`;
/// differences at or below `delta` are skipped, so plateaus of any length
/// between jumps do not hide chattering.
pub fn oscillation_count(u: &[f64], delta: f64) -> Oscillation {
    assert!(delta > 0.0, "oscillation threshold must be positive");
    let count = reversals(u, delta).len();
    Oscillation {
        count,
        flagged: count >= OSCILLATION_THRESHOLD,
    }
}

/// Span of the nodes that are off every target level or that begin a jump
/// taking part in a reversal. `None` for a monotone bang-bang profile.
pub fn irregular_region(
    u: &[f64],
    mesh: &Mesh,
    levels: &[f64],
    eps: f64,
    delta: f64,
) -> Option<(f64, f64)> {
    let interior = (0..u.len()).filter(|&k| classify(u[k], levels, eps) == Level::Interior);
    let turning = reversals(u, delta).into_iter().flat_map(|(a, b)| [a, b]);
    let mut nodes = interior.chain(turning);
    let first = nodes.next()?;
    let (lo, hi) = nodes.fold((first, first), |(a, b), k| (a.min(k), b.max(k)));
    Some((mesh.node(lo), mesh.node(hi)))
}

// ---------------------------------------------------------------------------
// experiments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Polyhedral,
    ProxTv,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Polyhedral => "polyhedral",
            Backend::ProxTv => "prox-tv",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "polyhedral" => Ok(Backend::Polyhedral),
            "prox-tv" => Ok(Backend::ProxTv),
            other => Err(format!(
                "unknown backend `{other}` (expected polyhedral or prox-tv)"
            )),
        }
    }
}

/// Reference control `(channel, t) -> u*_channel(t)`.
pub type ReferenceControl = dyn Fn(usize, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct ExperimentSetup {
    pub problem: Arc<dyn ControlProblem>,
    pub mesh: Mesh,
    pub weights: TvWeights,
    pub backend: Backend,
    pub config: SolverConfig,
    /// Initial controls, `m × N`.
    pub initial: Array2<f64>,
}

impl ExperimentSetup {
    /// Constant initial guess per channel, clamped into the box.
    pub fn new(
        problem: Arc<dyn ControlProblem>,
        mesh: Mesh,
        weights: TvWeights,
        backend: Backend,
        config: SolverConfig,
        start: &[f64],
    ) -> Result<Self, AnalysisError> {
        let m = problem.control_dim();
        if start.len() != m {
            return Err(AnalysisError::InvalidInput(format!(
                "initial guess has {} channels, problem has {m}",
                start.len()
            )));
        }
        let (lo, hi) = (
            problem.lower_bounds().to_vec(),
            problem.upper_bounds().to_vec(),
        );
        let initial =
            Array2::from_shape_fn((m, mesh.intervals()), |(j, _)| start[j].clamp(lo[j], hi[j]));
        Ok(Self {
            problem,
            mesh,
            weights,
            backend,
            config,
            initial,
        })
    }

    pub fn with_weights(&self, weights: TvWeights) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub rho: f64,
    pub l1_error: Option<f64>,
    pub linf_error: Option<f64>,
    pub switches: Vec<SwitchRecord>,
    pub first_upper: Option<f64>,
    pub irregular_region: Option<(f64, f64)>,
    pub oscillation_count: usize,
    pub oscillating: bool,
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub backend: Backend,
    pub termination: Termination,
    pub stationarity: f64,
    pub iterations: usize,
    pub gradient_projection_iterations: usize,
    pub face_iterations: usize,
    pub evaluations: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub intervals: usize,
    pub step: f64,
    pub channels: Vec<ChannelReport>,
    /// Discrete objective without the penalty.
    pub objective: f64,
    pub penalized_objective: f64,
    pub solver: SolverSummary,
}

impl ExperimentReport {
    pub fn converged(&self) -> bool {
        self.solver.termination == Termination::Converged
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub mesh: Mesh,
    pub trajectory: Trajectory,
    /// `∂J/∂u_k / h`, the discrete switching functions.
    pub switching: Array2<f64>,
    pub trace: Vec<IterationRecord>,
}

pub fn run_experiment(
    setup: &ExperimentSetup,
    reference: Option<&ReferenceControl>,
) -> Result<Experiment, AnalysisError> {
    let problem = setup.problem.as_ref();
    let mesh = setup.mesh;
    let m = problem.control_dim();
    if setup.initial.dim() != (m, mesh.intervals()) {
        return Err(AnalysisError::InvalidInput(
            "initial guess shape does not match the mesh".into(),
        ));
    }
    let (controls, summary, trace) = match setup.backend {
        Backend::Polyhedral => {
            let nlp = assemble_nlp(setup.problem.clone(), mesh, &setup.weights)?;
            let layout = StackLayout::new(m, mesh.intervals());
            let z0 = layout.pack(setup.initial.view());
            let rep = solve(&nlp, &z0, &setup.config)?;
            let summary = SolverSummary {
                backend: Backend::Polyhedral,
                termination: rep.termination,
                stationarity: rep.stationarity,
                iterations: rep.iterations(),
                gradient_projection_iterations: rep.phase1_iters,
                face_iterations: rep.phase2_iters,
                evaluations: rep.evaluations,
                elapsed_seconds: rep.elapsed.as_secs_f64(),
            };
            (layout.controls(&rep.z), summary, rep.trace)
        }
        Backend::ProxTv => {
            if setup.weights.len() != 1 {
                return Err(AnalysisError::InvalidInput(
                    "prox-tv backend needs exactly one weight".into(),
                ));
            }
            let init: Vec<f64> = setup.initial.row(0).to_vec();
            let rep = prox_tv_backend(
                problem,
                &mesh,
                setup.weights.as_slice()[0],
                &setup.config,
                Some(&init),
            )?;
            let summary = SolverSummary {
                backend: Backend::ProxTv,
                termination: rep.termination,
                stationarity: rep.stationarity,
                iterations: rep.iterations,
                gradient_projection_iterations: rep.iterations,
                face_iterations: 0,
                evaluations: rep.iterations + 1,
                elapsed_seconds: rep.elapsed.as_secs_f64(),
            };
            (rep.controls, summary, Vec::new())
        }
    };

    let objective = reduced_cost(problem, &mesh, controls.view())?;
    let trajectory = Trajectory::evaluate(problem, &mesh, controls)?;
    let switching = trajectory.gradient(problem, &mesh)? / mesh.step();

    let mut channels = Vec::with_capacity(m);
    let mut penalized_objective = objective;
    for j in 0..m {
        let row: Vec<f64> = trajectory.controls.row(j).to_vec();
        let (lo, hi) = (problem.lower_bounds()[j], problem.upper_bounds()[j]);
        let (eps, delta) = (
            SWITCH_FRACTION * (hi - lo),
            OSCILLATION_FRACTION * (hi - lo),
        );
        let levels = [lo, hi];
        let rho = setup.weights.as_slice()[j];
        let tv = total_variation(&row);
        penalized_objective += rho * tv;
        let switches = detect_switches(&row, &mesh, &levels, eps);
        let osc = oscillation_count(&row, delta);
        let (l1, linf) = match reference {
            Some(r) => (
                Some(grid_l1_error(&row, |t| r(j, t), &mesh)),
                Some(grid_linf_error(&row, |t| r(j, t), &mesh)),
            ),
            None => (None, None),
        };
        channels.push(ChannelReport {
            rho,
            l1_error: l1,
            linf_error: linf,
            first_upper: first_arrival(&switches, hi),
            irregular_region: irregular_region(&row, &mesh, &levels, eps, delta),
            switches,
            oscillation_count: osc.count,
            oscillating: osc.flagged,
            total_variation: tv,
        });
    }

    Ok(Experiment {
        report: ExperimentReport {
            intervals: mesh.intervals(),
            step: mesh.step(),
            channels,
            objective,
            penalized_objective,
            solver: summary,
        },
        mesh,
        trajectory,
        switching,
        trace,
    })
}

/// One solve per uniform weight, all from the same initial guess. Results
/// keep the input order; a failed solve does not stop the others.
pub fn rho_sweep(
    base: &ExperimentSetup,
    rhos: &[f64],
    reference: Option<&ReferenceControl>,
) -> Vec<Result<Experiment, AnalysisError>> {
    let m = base.problem.control_dim();
    rhos.par_iter()
        .map(|&rho| {
            let weights = TvWeights::uniform(rho, m)?;
            run_experiment(&base.with_weights(weights), reference)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares `y = slope·x + intercept`. Needs two distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Internally studentized residuals of the straight-line fit; empty when
/// fewer than three points or a perfect fit.
pub fn studentized_residuals(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let Some(fit) = linear_fit(x, y) else {
        return Vec::new();
    };
    if n < 3 {
        return Vec::new();
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let res: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - fit.slope * a - fit.intercept)
        .collect();
    let s2 = res.iter().map(|r| r * r).sum::<f64>() / (nf - 2.0);
    if s2 <= 0.0 {
        return vec![0.0; n];
    }
    res.iter()
        .zip(x)
        .map(|(r, a)| {
            let leverage = 1.0 / nf + (a - mx) * (a - mx) / sxx;
            r / (s2 * (1.0 - leverage)).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub step: f64,
    pub error: f64,
    /// `err_h / err_{h/2}` when the halved mesh is present.
    pub ratio: Option<f64>,
    pub log2_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Fit of `ln err` against `ln h` over every row.
    pub fit_all: Option<LinearFit>,
    /// Fit with outliers removed.
    pub fit_trimmed: Option<LinearFit>,
    pub outliers: Vec<bool>,
}

/// Studentized residuals beyond this are excluded from the trimmed fit.
pub const OUTLIER_CUTOFF: f64 = 2.0;

impl ConvergenceTable {
    /// Builds the table from raw `(h, err_h)` pairs in any order.
    pub fn from_errors(data: &[(f64, f64)]) -> Self {
        let mut pts = data.to_vec();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let rows = (0..pts.len())
            .map(|i| {
                let halved = pts
                    .get(i + 1)
                    .filter(|next| ((pts[i].0 / next.0) - 2.0).abs() <= 1e-9)
                    .map(|next| pts[i].1 / next.1);
                ConvergenceRow {
                    step: pts[i].0,
                    error: pts[i].1,
                    ratio: halved,
                    log2_ratio: halved.map(f64::log2),
                }
            })
            .collect::<Vec<_>>();
        let usable: Vec<usize> = (0..pts.len())
            .filter(|&i| pts[i].0 > 0.0 && pts[i].1 > 0.0)
            .collect();
        let lx: Vec<f64> = usable.iter().map(|&i| pts[i].0.ln()).collect();
        let ly: Vec<f64> = usable.iter().map(|&i| pts[i].1.ln()).collect();
        let fit_all = linear_fit(&lx, &ly);
        let mut outliers = vec![false; pts.len()];
        for (slot, r) in usable.iter().zip(studentized_residuals(&lx, &ly)) {
            outliers[*slot] = r.abs() > OUTLIER_CUTOFF;
        }
        let keep: Vec<usize> = (0..lx.len()).filter(|&i| !outliers[usable[i]]).collect();
        let fit_trimmed = linear_fit(
            &keep.iter().map(|&i| lx[i]).collect::<Vec<_>>(),
            &keep.iter().map(|&i| ly[i]).collect::<Vec<_>>(),
        );
        Self {
            rows,
            fit_all,
            fit_trimmed,
            outliers,
        }
    }
}

/// Mesh with step `h` on `[0, horizon]`; `h` must divide the horizon.
pub fn mesh_for_step(horizon: f64, h: f64) -> Result<Mesh, AnalysisError> {
    let n = (horizon / h).round();
    if !(h > 0.0) || n < 2.0 || ((n * h - horizon) / horizon).abs() > 1e-9 {
        return Err(AnalysisError::InvalidInput(format!(
            "step {h} does not divide horizon {horizon}"
        )));
    }
    Ok(Mesh::new(horizon, n as usize)?)
}

/// Runs `error_at` on each mesh in parallel and tabulates the results.
pub fn convergence_study<F>(
    horizon: f64,
    steps: &[f64],
    error_at: F,
) -> Result<ConvergenceTable, AnalysisError>
where
    F: Fn(&Mesh) -> Result<f64, AnalysisError> + Sync,
{
    if steps.is_empty() {
        return Err(AnalysisError::InvalidInput("no mesh steps given".into()));
    }
    let meshes = steps
        .iter()
        .map(|&h| mesh_for_step(horizon, h))
        .collect::<Result<Vec<_>, _>>()?;
    let errors: Vec<(f64, f64)> = meshes
        .par_iter()
        .zip(steps.par_iter())
        .map(|(mesh, &h)| {
            error_at(mesh)
                .map(|e| (h, e))
                .map_err(|e| AnalysisError::MeshSolve {
                    step: h,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(ConvergenceTable::from_errors(&errors))
}

/// The L¹ error of a single-channel experiment against its reference.
pub fn experiment_error(
    setup: &ExperimentSetup,
    reference: &ReferenceControl,
) -> Result<f64, AnalysisError> {
    let exp = run_experiment(setup, Some(reference))?;
    exp.report.channels[0]
        .l1_error
        .ok_or_else(|| AnalysisError::InvalidInput("no reference error".into()))
}
