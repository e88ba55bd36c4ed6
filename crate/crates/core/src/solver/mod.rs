//! Minimization over `{lo <= z <= hi, B z = 0}`.
//!
//! [`solve`] alternates gradient projection with limited-memory quasi-Newton
//! steps on the current active face. [`prox_tv`] is an independent
//! proximal-gradient path for single-channel total-variation problems.

mod band;
mod nlp;
mod projection;
pub mod prox_tv;
mod twophase;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocp::OcpError;

pub use band::{BandLdl, BandMatrix};
pub use nlp::{Objective, PolyhedralNlp, SparseRows};
pub use projection::{project, ProjectionError, ProjectionStats, Projector};
pub use twophase::solve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("initial point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("objective evaluation failed at the initial point: {0}")]
    Evaluation(#[from] OcpError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Sup-norm tolerance on the projected-gradient step `E(z)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking contraction factor.
    pub backtrack: f64,
    /// First gradient-projection step; defaults to `1/|∇J(z0)|∞`.
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub max_step: f64,
    /// Leave the active face once its reduced error falls below this
    /// fraction of `E(z)`.
    pub face_exit_ratio: f64,
    pub projection_tol: f64,
    /// Number of stored quasi-Newton pairs on a face.
    pub memory: usize,
    /// Record every n-th iteration in the trace (phase changes are always kept).
    pub trace_every: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200_000,
            armijo: 1e-4,
            backtrack: 0.5,
            initial_step: None,
            min_step: 1e-10,
            max_step: 1e10,
            face_exit_ratio: 0.1,
            projection_tol: 1e-13,
            memory: 10,
            trace_every: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must lie in (0,1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0,1)");
        }
        if !(self.min_step > 0.0 && self.min_step <= self.max_step) {
            return bad("step range must satisfy 0 < min_step <= max_step");
        }
        if !(self.projection_tol > 0.0) {
            return bad("projection tolerance must be positive");
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return bad("initial step must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailure,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIters => "max-iters",
            Termination::LineSearchFailure => "line-search-failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    GradientProjection,
    ActiveFace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub objective: f64,
    pub stationarity: f64,
    pub step: f64,
    pub free: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub z: Vec<f64>,
    pub objective: f64,
    pub stationarity: f64,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub evaluations: usize,
    pub elapsed: Duration,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.phase1_iters + self.phase2_iters
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}
