//! Direct transcription of control-affine optimal control problems with
//! total-variation regularization.
//!
//! - [`ocp`]: Euler rollout, discrete adjoints, exact reduced gradients.
//! - [`tv`]: difference splitting and assembly of the lifted polyhedral problem.
//! - [`solver`]: two-phase projected-gradient solver and a proximal cross-check.
//! - [`problems`]: fishery, plant and epidemic benchmarks.
//! - [`analysis`]: error norms, switch and oscillation detection, sweeps.

pub mod analysis;
pub mod ocp;
pub mod problems;
pub mod solver;
pub mod tv;
