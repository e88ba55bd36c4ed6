#![allow(dead_code)]
//! Oracles and fixtures shared by the integration and acceptance tests.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singctrl_core::analysis::{run_experiment, Backend, Experiment, ExperimentSetup};
use singctrl_core::ocp::{reduced_cost, reduced_cost_and_gradient, ControlProblem, Mesh};
use singctrl_core::problems::*;
use singctrl_core::solver::SolverConfig;
use singctrl_core::tv::TvWeights;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// experiments

pub fn fishery_run(rho: f64, intervals: usize, backend: Backend) -> (Experiment, FisheryExact) {
    let p = FisheryParams::default();
    let exact = fishery_exact(p).unwrap();
    let setup = ExperimentSetup::new(
        Arc::new(fishery_problem(p).unwrap()),
        Mesh::new(p.horizon, intervals).unwrap(),
        TvWeights::uniform(rho, 1).unwrap(),
        backend,
        SolverConfig::with_tol(1e-10),
        &[0.0],
    )
    .unwrap();
    let reference = move |_: usize, t: f64| exact.control(t);
    (run_experiment(&setup, Some(&reference)).unwrap(), exact)
}

pub fn plant_run(case: PlantCase, rho: f64) -> (Experiment, PlantExact) {
    let p = PlantParams::case(case).unwrap();
    let exact = plant_exact(p).unwrap();
    let setup = ExperimentSetup::new(
        Arc::new(plant_problem(p).unwrap()),
        Mesh::new(p.horizon, 750).unwrap(),
        TvWeights::uniform(rho, 1).unwrap(),
        Backend::Polyhedral,
        SolverConfig::with_tol(1e-10),
        &[0.0],
    )
    .unwrap();
    let reference = move |_: usize, t: f64| exact.control(t);
    (run_experiment(&setup, Some(&reference)).unwrap(), exact)
}

pub fn sir_run(weight: f64) -> Experiment {
    let p = SirParams::default();
    let setup = ExperimentSetup::new(
        Arc::new(sir_problem(p).unwrap()),
        Mesh::new(p.horizon, 750).unwrap(),
        TvWeights::uniform(weight, 2).unwrap(),
        Backend::Polyhedral,
        SolverConfig::with_tol(1e-8),
        &[0.0, 0.0],
    )
    .unwrap();
    run_experiment(&setup, None).unwrap()
}

// ---------------------------------------------------------------------------
// gradient oracle

/// Random controls inside the box, `m × N`.
pub fn random_controls<P: ControlProblem + ?Sized>(
    problem: &P,
    intervals: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let (lo, hi) = (problem.lower_bounds(), problem.upper_bounds());
    Array2::from_shape_fn((problem.control_dim(), intervals), |(j, _)| {
        rng.gen_range(lo[j]..=hi[j])
    })
}

/// Five-point central differences of the reduced cost.
pub fn finite_difference_gradient<P: ControlProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    u: &Array2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(u.dim());
    let mut work = u.clone();
    for ((j, k), slot) in out.indexed_iter_mut() {
        let base = u[[j, k]];
        let step = 1e-3 * (1.0 + base.abs());
        let mut at = |offset: f64| {
            work[[j, k]] = base + offset * step;
            reduced_cost(problem, mesh, work.view()).unwrap()
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        work[[j, k]] = base;
        *slot = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step);
    }
    out
}

/// Largest componentwise relative gap between the adjoint gradient and
/// central differences. Entries far below the gradient's scale are compared
/// against that scale instead of their own size.
pub fn gradient_gap<P: ControlProblem + ?Sized>(problem: &P, mesh: &Mesh, u: &Array2<f64>) -> f64 {
    let (_, g) = reduced_cost_and_gradient(problem, mesh, u.view()).unwrap();
    let fd = finite_difference_gradient(problem, mesh, u);
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    g.iter()
        .zip(fd.iter())
        .map(|(a, b)| {
            (a - b).abs()
                / a.abs()
                    .max(b.abs())
                    .max(1e-3 * scale)
                    .max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

pub fn benchmark_problems() -> Vec<(&'static str, Arc<dyn ControlProblem>)> {
    vec![
        (
            "fishery",
            Arc::new(fishery_problem(FisheryParams::default()).unwrap()),
        ),
        (
            "plant",
            Arc::new(plant_problem(PlantParams::case(PlantCase::SingularStart).unwrap()).unwrap()),
        ),
        ("sir", Arc::new(sir_problem(SirParams::default()).unwrap())),
    ]
}

// ---------------------------------------------------------------------------
// projection oracle

pub struct QpInstance {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Dense equality rows.
    pub rows: Vec<Vec<f64>>,
    pub point: Vec<f64>,
}

/// Single-channel difference-splitting constraints on `n` nodes with random
/// control bounds and a random point.
pub fn random_tv_instance(rng: &mut ChaCha8Rng, n: usize) -> QpInstance {
    let dim = 3 * n - 2;
    let mut rows = Vec::new();
    for k in 0..n - 1 {
        let mut r = vec![0.0; dim];
        r[k] = -1.0;
        r[k + 1] = 1.0;
        r[n + k] = -1.0;
        r[2 * n - 1 + k] = 1.0;
        rows.push(r);
    }
    let a: f64 = rng.gen_range(-2.0..1.0);
    let b: f64 = a + rng.gen_range(0.1..3.0);
    let mut lower = vec![0.0; dim];
    let mut upper = vec![f64::INFINITY; dim];
    lower[..n].iter_mut().for_each(|v| *v = a);
    upper[..n].iter_mut().for_each(|v| *v = b);
    let point = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
    QpInstance {
        lower,
        upper,
        rows,
        point,
    }
}

/// Minimizes `½|z - y|²` by trying every assignment of each variable to
/// free, lower or upper and keeping the best feasible candidate.
pub fn brute_force_projection(qp: &QpInstance) -> Vec<f64> {
    let d = qp.point.len();
    let choices: Vec<Vec<u8>> = (0..d)
        .map(|i| {
            let mut c = vec![0u8];
            if qp.lower[i].is_finite() {
                c.push(1);
            }
            if qp.upper[i].is_finite() && qp.upper[i] != qp.lower[i] {
                c.push(2);
            }
            c
        })
        .collect();
    let mut pattern = vec![0usize; d];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let state: Vec<u8> = (0..d).map(|i| choices[i][pattern[i]]).collect();
        if let Some(z) = face_minimizer(qp, &state) {
            let feasible = (0..d)
                .all(|i| z[i] >= qp.lower[i] - 1e-11 && z[i] <= qp.upper[i] + 1e-11)
                && qp
                    .rows
                    .iter()
                    .all(|r| r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-9);
            if feasible {
                let obj: f64 = z
                    .iter()
                    .zip(&qp.point)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                    best = Some((obj, z));
                }
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                return best.expect("feasible set is nonempty").1;
            }
            pattern[i] += 1;
            if pattern[i] < choices[i].len() {
                break;
            }
            pattern[i] = 0;
            i += 1;
        }
    }
}

// Fixes bound variables and projects the rest onto the affine constraint.
fn face_minimizer(qp: &QpInstance, state: &[u8]) -> Option<Vec<f64>> {
    let d = qp.point.len();
    let mut z: Vec<f64> = (0..d)
        .map(|i| match state[i] {
            1 => qp.lower[i],
            2 => qp.upper[i],
            _ => qp.point[i],
        })
        .collect();
    let free: Vec<usize> = (0..d).filter(|&i| state[i] == 0).collect();
    let m = qp.rows.len();
    // (B_F B_Fᵀ) λ = B z with the free part at y; then z_F -= B_Fᵀ λ
    let mut gram = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            gram[a][b] = free.iter().map(|&i| qp.rows[a][i] * qp.rows[b][i]).sum();
        }
    }
    let rhs: Vec<f64> = qp
        .rows
        .iter()
        .map(|r| r.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect();
    let lambda = solve_consistent(gram, rhs)?;
    for &i in &free {
        z[i] -= (0..m).map(|a| qp.rows[a][i] * lambda[a]).sum::<f64>();
    }
    Some(z)
}

// Gaussian elimination with full pivoting; rank-deficient systems are
// accepted when consistent, with the null-space components set to zero.
fn solve_consistent(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for r in 0..n {
        let mut best = (0.0, r, r);
        for i in r..n {
            for j in r..n {
                if a[i][cols[j]].abs() > best.0 {
                    best = (a[i][cols[j]].abs(), i, j);
                }
            }
        }
        if best.0 < 1e-12 {
            break;
        }
        a.swap(r, best.1);
        b.swap(r, best.1);
        cols.swap(r, best.2);
        let p = a[r][cols[r]];
        for i in r + 1..n {
            let f = a[i][cols[r]] / p;
            if f != 0.0 {
                for j in r..n {
                    let v = a[r][cols[j]];
                    a[i][cols[j]] -= f * v;
                }
                b[i] -= f * b[r];
            }
        }
        rank += 1;
    }
    if b[rank..].iter().any(|v| v.abs() > 1e-9) {
        return None;
    }
    let mut x = vec![0.0; n];
    for r in (0..rank).rev() {
        let s: f64 = (r + 1..rank).map(|j| a[r][cols[j]] * x[cols[j]]).sum();
        x[cols[r]] = (b[r] - s) / a[r][cols[r]];
    }
    Some(x)
}

pub fn sparse_rows(qp: &QpInstance) -> singctrl_core::solver::SparseRows {
    let mut rows = singctrl_core::solver::SparseRows::new(qp.point.len());
    for r in &qp.rows {
        rows.push_row(
            r.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        );
    }
    rows
}

// ---------------------------------------------------------------------------
// difference splitting

/// Largest violation of complementarity, recomposition and variation equality.
pub fn decomposition_defect(u: &[f64]) -> f64 {
    let (rise, fall) = singctrl_core::tv::tv_decompose(u);
    let mut worst = 0.0f64;
    let mut sum = 0.0;
    for k in 0..u.len().saturating_sub(1) {
        worst = worst.max((rise[k] * fall[k]).abs());
        worst = worst.max((rise[k] - fall[k] - (u[k + 1] - u[k])).abs());
        if rise[k] < 0.0 || fall[k] < 0.0 {
            worst = f64::INFINITY;
        }
        sum += rise[k] + fall[k];
    }
    let direct: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    worst
        .max((sum - direct).abs())
        .max((singctrl_core::tv::total_variation(u) - direct).abs())
}
