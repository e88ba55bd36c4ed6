//! Proximal-gradient path for single-channel problems.
//!
//! `min J(u) + ρ Σ|u_{k+1} - u_k|` over a box, using the exact 1-D
//! total-variation prox followed by clipping. For one-dimensional TV the
//! clipped prox is the prox of TV plus the box indicator, so each step is exact.

use std::time::{Duration, Instant};

use ndarray::Array2;

use super::{SolverConfig, SolverError, Termination};
use crate::ocp::{reduced_cost, reduced_cost_and_gradient, ControlProblem, Mesh};
use crate::tv::total_variation;

/// Exact solution of `min ½|x - y|² + λ Σ|x_{k+1} - x_k|` (direct taut-string scan).
pub fn tv_denoise(input: &[f64], lambda: f64, output: &mut [f64]) {
    let width = input.len();
    assert_eq!(output.len(), width);
    if width == 0 {
        return;
    }
    if lambda <= 0.0 {
        output.copy_from_slice(input);
        return;
    }
    let (mut k, mut k0) = (0usize, 0usize);
    let (mut kplus, mut kminus) = (0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                while k0 <= kminus {
                    output[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    output[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    output[k0] = vmin;
                    k0 += 1;
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            while k0 <= kminus {
                output[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                output[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= minlambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = minlambda;
        }
    }
}

/// Prox of `λ TV + indicator([lo, hi])`.
pub fn prox_tv_box(input: &[f64], lambda: f64, lo: f64, hi: f64, output: &mut [f64]) {
    tv_denoise(input, lambda, output);
    output.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxReport {
    pub controls: Array2<f64>,
    pub objective: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub elapsed: Duration,
    pub termination: Termination,
}

/// Proximal gradient with Barzilai–Borwein steps and a backtracking
/// majorization test. Stops when `|prox(u - ∇J(u)) - u|∞ <= tol`.
pub fn prox_tv_backend<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    rho: f64,
    cfg: &SolverConfig,
    initial: Option<&[f64]>,
) -> Result<ProxReport, SolverError> {
    cfg.validate()?;
    if problem.control_dim() != 1 {
        return Err(SolverError::InvalidConfig(
            "proximal TV path supports a single control channel".into(),
        ));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(SolverError::InvalidConfig(format!(
            "rho must lie in [0,1), got {rho}"
        )));
    }
    let start = Instant::now();
    let n = mesh.intervals();
    let (lo, hi) = (problem.lower_bounds()[0], problem.upper_bounds()[0]);
    let mut u = vec![0.0; n];
    if let Some(init) = initial {
        if init.len() != n {
            return Err(SolverError::DimensionMismatch {
                expected: n,
                found: init.len(),
            });
        }
        u.copy_from_slice(init);
    }
    u.iter_mut().for_each(|v| *v = v.clamp(lo, hi));

    let eval = |u: &[f64]| -> Result<(f64, Vec<f64>), crate::ocp::OcpError> {
        let view = ndarray::ArrayView2::from_shape((1, u.len()), u).expect("row view");
        let (j, g) = reduced_cost_and_gradient(problem, mesh, view)?;
        Ok((j, g.into_raw_vec_and_offset().0))
    };
    let value = |u: &[f64]| -> Result<f64, crate::ocp::OcpError> {
        let view = ndarray::ArrayView2::from_shape((1, u.len()), u).expect("row view");
        reduced_cost(problem, mesh, view)
    };

    let (mut j, mut g) = eval(&u)?;
    let mut trial = vec![0.0; n];
    let mut next = vec![0.0; n];
    let stationarity = |u: &[f64], g: &[f64], buf: &mut Vec<f64>, out: &mut Vec<f64>| {
        for k in 0..u.len() {
            buf[k] = u[k] - g[k];
        }
        prox_tv_box(buf, rho, lo, hi, out);
        out.iter()
            .zip(u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut e = stationarity(&u, &g, &mut trial, &mut next);
    let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut alpha = cfg
        .initial_step
        .unwrap_or(if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 })
        .clamp(cfg.min_step, cfg.max_step);
    let mut iterations = 0;
    let termination = loop {
        if e <= cfg.tol {
            break Termination::Converged;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIters;
        }
        iterations += 1;
        let mut a = alpha;
        let mut accepted = None;
        for _ in 0..200 {
            for k in 0..n {
                trial[k] = u[k] - a * g[k];
            }
            prox_tv_box(&trial, a * rho, lo, hi, &mut next);
            let (mut lin, mut sq, mut moved) = (0.0, 0.0, 0.0f64);
            for k in 0..n {
                let d = next[k] - u[k];
                lin += g[k] * d;
                sq += d * d;
                moved = moved.max(d.abs());
            }
            if moved == 0.0 {
                break;
            }
            if let Ok(jt) = value(&next) {
                let bound = j + lin + sq / (2.0 * a);
                if jt <= bound + 1e-13 * (1.0 + j.abs()) {
                    accepted = Some(jt);
                    break;
                }
            }
            a *= cfg.backtrack;
        }
        if accepted.is_none() {
            break Termination::LineSearchFailure;
        }
        let (jn, gn) = eval(&next)?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..n {
            let s = next[k] - u[k];
            ss += s * s;
            sy += s * (gn[k] - g[k]);
        }
        alpha = if sy > 0.0 { ss / sy } else { cfg.max_step };
        alpha = alpha.clamp(cfg.min_step, cfg.max_step);
        u.copy_from_slice(&next);
        j = jn;
        g = gn;
        e = stationarity(&u, &g, &mut trial, &mut next);
    };
    let objective = j + rho * total_variation(&u);
    Ok(ProxReport {
        controls: Array2::from_shape_vec((1, n), u).expect("shape"),
        objective,
        stationarity: e,
        iterations,
        elapsed: start.elapsed(),
        termination,
    })
}
