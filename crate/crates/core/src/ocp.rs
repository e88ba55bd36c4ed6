//! Control-affine optimal control problems on a uniform mesh.
//!
//! States follow explicit Euler, the running cost uses the left-rectangle
//! rule, and the adjoint recursion is the exact sensitivity of that discrete
//! cost, so gradients agree with finite differences up to rounding.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("mesh needs a positive finite horizon and at least 2 intervals (got T={horizon}, N={intervals})")]
    InvalidMesh { horizon: f64, intervals: usize },
    #[error("control bounds for channel {channel} are not ordered: {lower} >= {upper}")]
    InvalidBounds {
        channel: usize,
        lower: f64,
        upper: f64,
    },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("state rollout produced a non-finite value at node {node}")]
    RolloutDiverged { node: usize },
    #[error("running cost is non-finite at node {node}")]
    CostEvaluation { node: usize },
}

/// Uniform partition of `[0, T]` into `N` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    horizon: f64,
    intervals: usize,
    step: f64,
}

impl Mesh {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self, OcpError> {
        if !(horizon.is_finite() && horizon > 0.0) || intervals < 2 {
            return Err(OcpError::InvalidMesh { horizon, intervals });
        }
        Ok(Self {
            horizon,
            intervals,
            step: horizon / intervals as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Left endpoints `t_0 .. t_{N-1}`, where the controls live.
    pub fn control_nodes(&self) -> Vec<f64> {
        (0..self.intervals).map(|k| self.node(k)).collect()
    }
}

/// A control-affine problem `min ∫ g(x,u) dt, x' = f(x,u), lo <= u <= hi`.
///
/// Jacobians are written row-major into caller buffers: `dynamics_state_jacobian`
/// fills `out[i*n + l] = ∂f_i/∂x_l`, `dynamics_control_jacobian` fills
/// `out[i*m + j] = ∂f_i/∂u_j`.
pub trait ControlProblem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> &[f64];
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64;
    fn dynamics_state_jacobian(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    fn dynamics_control_jacobian(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    fn cost_state_gradient(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    fn cost_control_gradient(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// States outside the model's domain (e.g. an empty population) abort the rollout.
    fn admissible_state(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Checks the bound ordering invariant `lo_j < hi_j`.
pub fn validate_bounds<P: ControlProblem + ?Sized>(problem: &P) -> Result<(), OcpError> {
    let (lo, hi) = (problem.lower_bounds(), problem.upper_bounds());
    expect_len("lower bounds", problem.control_dim(), lo.len())?;
    expect_len("upper bounds", problem.control_dim(), hi.len())?;
    for (j, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if !(l < h) {
            return Err(OcpError::InvalidBounds {
                channel: j,
                lower: l,
                upper: h,
            });
        }
    }
    Ok(())
}

/// Largest change in the control partials between `u` and `u + delta`.
///
/// Zero for a control-affine problem.
pub fn control_affinity_defect<P: ControlProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    u: &[f64],
    delta: f64,
) -> f64 {
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let shifted: Vec<f64> = u.iter().map(|v| v + delta).collect();
    let (mut fa, mut fb) = (vec![0.0; n * m], vec![0.0; n * m]);
    let (mut ga, mut gb) = (vec![0.0; m], vec![0.0; m]);
    problem.dynamics_control_jacobian(x, u, &mut fa);
    problem.dynamics_control_jacobian(x, &shifted, &mut fb);
    problem.cost_control_gradient(x, u, &mut ga);
    problem.cost_control_gradient(x, &shifted, &mut gb);
    fa.iter()
        .zip(&fb)
        .chain(ga.iter().zip(&gb))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn expect_len(what: &'static str, expected: usize, found: usize) -> Result<(), OcpError> {
    if expected == found {
        Ok(())
    } else {
        Err(OcpError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

fn check_controls<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    u: ArrayView2<f64>,
) -> Result<(), OcpError> {
    expect_len("control rows", problem.control_dim(), u.nrows())?;
    expect_len("control columns", mesh.intervals(), u.ncols())
}

fn check_states<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    x: ArrayView2<f64>,
) -> Result<(), OcpError> {
    expect_len("state rows", problem.state_dim(), x.nrows())?;
    expect_len("state columns", mesh.intervals() + 1, x.ncols())
}

/// Explicit Euler states, shape `n × (N+1)`.
pub fn rollout_state<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    u: ArrayView2<f64>,
) -> Result<Array2<f64>, OcpError> {
    check_controls(problem, mesh, u)?;
    let n = problem.state_dim();
    let x0 = problem.initial_state();
    expect_len("initial state", n, x0.len())?;
    let h = mesh.step();
    let big_n = mesh.intervals();
    let mut x = Array2::zeros((n, big_n + 1));
    let mut xk = x0.to_vec();
    let mut uk = vec![0.0; problem.control_dim()];
    let mut fk = vec![0.0; n];
    for (i, &v) in xk.iter().enumerate() {
        x[[i, 0]] = v;
    }
    if xk.iter().any(|v| !v.is_finite()) || !problem.admissible_state(&xk) {
        return Err(OcpError::RolloutDiverged { node: 0 });
    }
    for k in 0..big_n {
        for (j, slot) in uk.iter_mut().enumerate() {
            *slot = u[[j, k]];
        }
        problem.dynamics(&xk, &uk, &mut fk);
        for i in 0..n {
            xk[i] += h * fk[i];
            x[[i, k + 1]] = xk[i];
        }
        if xk.iter().any(|v| !v.is_finite()) || !problem.admissible_state(&xk) {
            return Err(OcpError::RolloutDiverged { node: k + 1 });
        }
    }
    Ok(x)
}

/// Left-rectangle cost `Σ_{k<N} h g(x_k, u_k)`.
pub fn discrete_cost<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    x: ArrayView2<f64>,
    u: ArrayView2<f64>,
) -> Result<f64, OcpError> {
    check_controls(problem, mesh, u)?;
    check_states(problem, mesh, x)?;
    let h = mesh.step();
    let mut xk = vec![0.0; problem.state_dim()];
    let mut uk = vec![0.0; problem.control_dim()];
    let mut total = 0.0;
    for k in 0..mesh.intervals() {
        load_node(x, u, k, &mut xk, &mut uk);
        let g = problem.running_cost(&xk, &uk);
        if !g.is_finite() {
            return Err(OcpError::CostEvaluation { node: k });
        }
        total += h * g;
    }
    Ok(total)
}

fn load_node(x: ArrayView2<f64>, u: ArrayView2<f64>, k: usize, xk: &mut [f64], uk: &mut [f64]) {
    for (i, slot) in xk.iter_mut().enumerate() {
        *slot = x[[i, k]];
    }
    for (j, slot) in uk.iter_mut().enumerate() {
        *slot = u[[j, k]];
    }
}

/// Discrete adjoints, shape `n × N`, with `λ_{N-1} = 0`.
///
/// `λ_{k-1} = λ_k + h ∂g/∂x(x_k,u_k) + h (∂f/∂x)^T λ_k` for `k = N-1 .. 1`.
pub fn backward_adjoint<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    x: ArrayView2<f64>,
    u: ArrayView2<f64>,
) -> Result<Array2<f64>, OcpError> {
    check_controls(problem, mesh, u)?;
    check_states(problem, mesh, x)?;
    let n = problem.state_dim();
    let big_n = mesh.intervals();
    let h = mesh.step();
    let mut lam = Array2::zeros((n, big_n));
    let mut xk = vec![0.0; n];
    let mut uk = vec![0.0; problem.control_dim()];
    let mut gx = vec![0.0; n];
    let mut fx = vec![0.0; n * n];
    for k in (1..big_n).rev() {
        load_node(x, u, k, &mut xk, &mut uk);
        problem.cost_state_gradient(&xk, &uk, &mut gx);
        problem.dynamics_state_jacobian(&xk, &uk, &mut fx);
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += lam[[l, k]] * fx[l * n + i];
            }
            lam[[i, k - 1]] = lam[[i, k]] + h * gx[i] + h * acc;
        }
    }
    Ok(lam)
}

/// Reduced-cost gradient with respect to the controls, shape `m × N`.
pub fn gradient_via_lagrangian<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    x: ArrayView2<f64>,
    u: ArrayView2<f64>,
    lam: ArrayView2<f64>,
) -> Result<Array2<f64>, OcpError> {
    check_controls(problem, mesh, u)?;
    check_states(problem, mesh, x)?;
    let (n, m) = (problem.state_dim(), problem.control_dim());
    expect_len("adjoint rows", n, lam.nrows())?;
    expect_len("adjoint columns", mesh.intervals(), lam.ncols())?;
    let h = mesh.step();
    let mut grad = Array2::zeros((m, mesh.intervals()));
    let mut xk = vec![0.0; n];
    let mut uk = vec![0.0; m];
    let mut gu = vec![0.0; m];
    let mut fu = vec![0.0; n * m];
    for k in 0..mesh.intervals() {
        load_node(x, u, k, &mut xk, &mut uk);
        problem.cost_control_gradient(&xk, &uk, &mut gu);
        problem.dynamics_control_jacobian(&xk, &uk, &mut fu);
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                acc += lam[[i, k]] * fu[i * m + j];
            }
            grad[[j, k]] = h * gu[j] + h * acc;
        }
    }
    Ok(grad)
}

/// States, adjoints and controls of one discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Array2<f64>,
    pub adjoints: Array2<f64>,
    pub controls: Array2<f64>,
}

impl Trajectory {
    /// Rolls out states and adjoints for the given controls.
    pub fn evaluate<P: ControlProblem + ?Sized>(
        problem: &P,
        mesh: &Mesh,
        controls: Array2<f64>,
    ) -> Result<Self, OcpError> {
        let states = rollout_state(problem, mesh, controls.view())?;
        let adjoints = backward_adjoint(problem, mesh, states.view(), controls.view())?;
        Ok(Self {
            states,
            adjoints,
            controls,
        })
    }

    pub fn cost<P: ControlProblem + ?Sized>(
        &self,
        problem: &P,
        mesh: &Mesh,
    ) -> Result<f64, OcpError> {
        discrete_cost(problem, mesh, self.states.view(), self.controls.view())
    }

    pub fn gradient<P: ControlProblem + ?Sized>(
        &self,
        problem: &P,
        mesh: &Mesh,
    ) -> Result<Array2<f64>, OcpError> {
        gradient_via_lagrangian(
            problem,
            mesh,
            self.states.view(),
            self.controls.view(),
            self.adjoints.view(),
        )
    }
}

/// Reduced cost `u ↦ J(x(u), u)`.
pub fn reduced_cost<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    u: ArrayView2<f64>,
) -> Result<f64, OcpError> {
    let x = rollout_state(problem, mesh, u)?;
    discrete_cost(problem, mesh, x.view(), u)
}

/// Reduced cost and its gradient in one forward/backward sweep.
pub fn reduced_cost_and_gradient<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    u: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>), OcpError> {
    let x = rollout_state(problem, mesh, u)?;
    let cost = discrete_cost(problem, mesh, x.view(), u)?;
    let lam = backward_adjoint(problem, mesh, x.view(), u)?;
    let grad = gradient_via_lagrangian(problem, mesh, x.view(), u, lam.view())?;
    Ok((cost, grad))
}
