//! Euclidean projection onto `{lo <= z <= hi, B z = 0}`.
//!
//! The dual function `θ(μ) = min_{lo<=z<=hi} ½|z - y|² + μᵀBz` is concave and
//! piecewise quadratic with `z(μ) = clamp(y - Bᵀμ)` and `∇θ = B z(μ)`. A
//! semismooth Newton iteration on the multipliers, with the generalized
//! Hessian `B D Bᵀ` over the unclamped columns, finds the active set and then
//! terminates at the exact projection. `B D Bᵀ` is banded whenever each column
//! of `B` touches nearby rows, which makes each step linear in the dimension.

use thiserror::Error;

use super::band::BandMatrix;
use super::nlp::{PolyhedralNlp, SparseRows};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("feasible set is empty")]
    Infeasible,
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    pub iterations: usize,
    pub residual: f64,
}

// Floor on the Hessian shift; keeps rows without free columns solvable.
const MIN_SHIFT: f64 = 1e-10;

/// Reusable projector; keeps the last multipliers as a warm start.
#[derive(Debug, Clone)]
pub struct Projector {
    lower: Vec<f64>,
    upper: Vec<f64>,
    matrix: SparseRows,
    columns: Vec<Vec<(usize, f64)>>,
    band: BandMatrix,
    mu: Vec<f64>,
    tol: f64,
    max_iter: usize,
    w: Vec<f64>,
    r: Vec<f64>,
}

impl Projector {
    pub fn new(lower: &[f64], upper: &[f64], matrix: &SparseRows, tol: f64) -> Self {
        let columns = matrix.columns();
        let width = matrix.normal_band_width();
        let rows = matrix.nrows();
        Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            matrix: matrix.clone(),
            columns,
            band: BandMatrix::zeros(rows, width),
            mu: vec![0.0; rows],
            tol,
            max_iter: 500,
            w: vec![0.0; lower.len()],
            r: vec![0.0; rows],
        }
    }

    pub fn for_nlp(nlp: &PolyhedralNlp, tol: f64) -> Self {
        Self::new(&nlp.lower, &nlp.upper, &nlp.equality, tol)
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn reset(&mut self) {
        self.mu.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Writes the projection of `y` into `out`.
    pub fn project(
        &mut self,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<ProjectionStats, ProjectionError> {
        assert_eq!(y.len(), self.lower.len());
        assert_eq!(out.len(), self.lower.len());
        if self.matrix.nrows() == 0 {
            for i in 0..y.len() {
                out[i] = y[i].clamp(self.lower[i], self.upper[i]);
            }
            return Ok(ProjectionStats {
                iterations: 0,
                residual: 0.0,
            });
        }
        let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let tol_abs = self.tol * scale;
        // by weak duality θ never exceeds the distance to a feasible point
        let ceiling: f64 = (0..y.len())
            .map(|i| {
                0.5 * (y[i] - self.lower[i])
                    .powi(2)
                    .max((y[i] - self.upper[i]).powi(2))
            })
            .sum();
        let ceiling = ceiling * (1.0 + 1e-9) + tol_abs * tol_abs;
        let mut mu = std::mem::take(&mut self.mu);
        let mut trial = vec![0.0; mu.len()];
        let mut step = vec![0.0; mu.len()];
        self.dual(y, &mu, out);
        let mut res = inf_norm(&self.r);
        for it in 0..self.max_iter {
            if res <= tol_abs {
                self.mu = mu;
                return Ok(ProjectionStats {
                    iterations: it,
                    residual: res,
                });
            }
            if mu.iter().any(|v| !v.is_finite() || v.abs() > 1e12 * scale) {
                self.mu = vec![0.0; trial.len()];
                return Err(ProjectionError::Infeasible);
            }
            self.assemble_hessian((res.min(1.0) / scale).max(MIN_SHIFT));
            let ldl = self.band.factor(1e-14);
            step.copy_from_slice(&self.r);
            ldl.solve_in_place(&mut step);
            // θ is concave, so its slope along the step is nonincreasing; a
            // nonnegative end slope certifies ascent without comparing θ
            // values that may differ only below rounding.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for ((tr, m), s) in trial.iter_mut().zip(&mu).zip(&step) {
                    *tr = m + t * s;
                }
                if self.dual(y, &trial, out) > ceiling {
                    self.mu = vec![0.0; trial.len()];
                    return Err(ProjectionError::Infeasible);
                }
                let rn = inf_norm(&self.r);
                let end_slope: f64 = step.iter().zip(&self.r).map(|(a, b)| a * b).sum();
                if end_slope >= 0.0 || rn <= 0.5 * res {
                    std::mem::swap(&mut mu, &mut trial);
                    res = rn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                self.dual(y, &mu, out);
                self.mu = mu;
                return Err(ProjectionError::NotConverged {
                    iterations: it,
                    residual: res,
                });
            }
        }
        self.mu = mu;
        Err(ProjectionError::NotConverged {
            iterations: self.max_iter,
            residual: res,
        })
    }

    // Evaluates θ(μ); leaves z(μ) in `z` and B z(μ) in `self.r`.
    fn dual(&mut self, y: &[f64], mu: &[f64], z: &mut [f64]) -> f64 {
        self.matrix.mul_transpose(mu, &mut self.w);
        let mut value = 0.0;
        for i in 0..y.len() {
            let wi = y[i] - self.w[i];
            self.w[i] = wi;
            z[i] = wi.clamp(self.lower[i], self.upper[i]);
            value += 0.5 * (z[i] - y[i]) * (z[i] - y[i]);
        }
        self.matrix.mul(z, &mut self.r);
        value + mu.iter().zip(&self.r).map(|(a, b)| a * b).sum::<f64>()
    }

    fn assemble_hessian(&mut self, shift: f64) {
        self.band.clear();
        for (i, col) in self.columns.iter().enumerate() {
            let wi = self.w[i];
            if !(self.lower[i] <= wi && wi <= self.upper[i]) || self.lower[i] == self.upper[i] {
                continue;
            }
            for (a, &(ra, va)) in col.iter().enumerate() {
                for &(rb, vb) in &col[..=a] {
                    self.band.add(ra, rb, va * vb);
                }
            }
        }
        self.band.add_diagonal(shift);
    }
}

pub(super) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Cold-started projection of `z` onto the feasible set of `nlp`.
pub fn project(nlp: &PolyhedralNlp, z: &[f64]) -> Result<Vec<f64>, ProjectionError> {
    let mut projector = Projector::for_nlp(nlp, 1e-13);
    let mut out = vec![0.0; z.len()];
    projector.project(z, &mut out)?;
    Ok(out)
}
