//! Total variation of piecewise-constant controls and the lifted problem.
//!
//! Each channel's differences are split as `u_{k+1} - u_k = ζ_k - ι_k` with
//! `ζ, ι >= 0`, which turns `ρ Σ|Δu|` into the linear term `ρ Σ(ζ + ι)` under
//! sparse equality constraints. The stacked vector is
//! `[u_1, ζ_1, ι_1, …, u_m, ζ_m, ι_m]`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::ocp::{reduced_cost, reduced_cost_and_gradient, ControlProblem, Mesh, OcpError};
use crate::solver::{Objective, PolyhedralNlp, SparseRows};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TvError {
    #[error("penalty weight {index} is {value}; weights must lie in [0, 1)")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} penalty weights, got {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("stacked vector has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },
}

/// Per-channel penalty weights `ρ_j ∈ [0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvWeights(Vec<f64>);

impl TvWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, TvError> {
        for (index, &value) in weights.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(TvError::WeightOutOfRange { index, value });
            }
        }
        Ok(Self(weights))
    }

    pub fn uniform(value: f64, channels: usize) -> Result<Self, TvError> {
        Self::new(vec![value; channels])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ |u_{k+1} - u_k|`.
pub fn total_variation(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Complementary split of consecutive differences; zero differences go to neither part.
pub fn tv_decompose(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    u.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d > 0.0 {
                (d, 0.0)
            } else {
                (0.0, -d)
            }
        })
        .unzip()
}

/// The `(N-1) × N` forward-difference stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    columns: usize,
}

impl DifferenceMatrix {
    pub fn new(columns: usize) -> Self {
        Self { columns }
    }

    pub fn rows(&self) -> usize {
        self.columns.saturating_sub(1)
    }

    /// Nonzeros of row `r`.
    pub fn row(&self, r: usize) -> [(usize, f64); 2] {
        [(r, -1.0), (r + 1, 1.0)]
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Offsets of the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackLayout {
    channels: usize,
    intervals: usize,
}

impl StackLayout {
    pub fn new(channels: usize, intervals: usize) -> Self {
        Self {
            channels,
            intervals,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    fn block(&self) -> usize {
        3 * self.intervals - 2
    }

    pub fn len(&self) -> usize {
        self.channels * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn control(&self, j: usize) -> std::ops::Range<usize> {
        let b = j * self.block();
        b..b + self.intervals
    }

    pub fn rise(&self, j: usize) -> std::ops::Range<usize> {
        let b = j * self.block() + self.intervals;
        b..b + self.intervals - 1
    }

    pub fn fall(&self, j: usize) -> std::ops::Range<usize> {
        let b = j * self.block() + 2 * self.intervals - 1;
        b..b + self.intervals - 1
    }

    /// Stacks controls with freshly decomposed differences.
    pub fn pack(&self, u: ArrayView2<f64>) -> Vec<f64> {
        let mut z = vec![0.0; self.len()];
        for j in 0..self.channels {
            let row: Vec<f64> = u.row(j).to_vec();
            let (rise, fall) = tv_decompose(&row);
            z[self.control(j)].copy_from_slice(&row);
            z[self.rise(j)].copy_from_slice(&rise);
            z[self.fall(j)].copy_from_slice(&fall);
        }
        z
    }

    pub fn controls(&self, z: &[f64]) -> Array2<f64> {
        let mut u = Array2::zeros((self.channels, self.intervals));
        for j in 0..self.channels {
            for (k, v) in z[self.control(j)].iter().enumerate() {
                u[[j, k]] = *v;
            }
        }
        u
    }

    /// Block rows `[A | -I | I]` per channel.
    pub fn equality(&self) -> SparseRows {
        let mut b = SparseRows::new(self.len());
        let a = DifferenceMatrix::new(self.intervals);
        for j in 0..self.channels {
            let (c, r, f) = (self.control(j), self.rise(j), self.fall(j));
            for k in 0..a.rows() {
                let [(c0, v0), (c1, v1)] = a.row(k);
                b.push_row(vec![
                    (c.start + c0, v0),
                    (c.start + c1, v1),
                    (r.start + k, -1.0),
                    (f.start + k, 1.0),
                ]);
            }
        }
        b
    }

    /// Penalty `Σ_j ρ_j Σ_k (ζ_{j,k} + ι_{j,k})`.
    pub fn penalty(&self, z: &[f64], weights: &[f64]) -> f64 {
        (0..self.channels)
            .map(|j| {
                let s: f64 = z[self.rise(j)].iter().chain(&z[self.fall(j)]).sum();
                weights[j] * s
            })
            .sum()
    }
}

/// Discrete cost plus the linear TV penalty on the stacked vector.
pub struct PenalizedObjective {
    problem: Arc<dyn ControlProblem>,
    mesh: Mesh,
    weights: Vec<f64>,
    layout: StackLayout,
}

impl PenalizedObjective {
    pub fn layout(&self) -> StackLayout {
        self.layout
    }
}

impl Objective for PenalizedObjective {
    fn value(&self, z: &[f64]) -> Result<f64, OcpError> {
        let u = self.layout.controls(z);
        Ok(reduced_cost(self.problem.as_ref(), &self.mesh, u.view())?
            + self.layout.penalty(z, &self.weights))
    }

    fn value_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64, OcpError> {
        let u = self.layout.controls(z);
        let (cost, gu) = reduced_cost_and_gradient(self.problem.as_ref(), &self.mesh, u.view())?;
        for j in 0..self.layout.channels {
            for (k, slot) in grad[self.layout.control(j)].iter_mut().enumerate() {
                *slot = gu[[j, k]];
            }
            let rho = self.weights[j];
            grad[self.layout.rise(j)].iter_mut().for_each(|v| *v = rho);
            grad[self.layout.fall(j)].iter_mut().for_each(|v| *v = rho);
        }
        Ok(cost + self.layout.penalty(z, &self.weights))
    }
}

/// Builds the lifted polyhedral problem for `problem` on `mesh`.
pub fn assemble_nlp(
    problem: Arc<dyn ControlProblem>,
    mesh: Mesh,
    weights: &TvWeights,
) -> Result<PolyhedralNlp, TvError> {
    let m = problem.control_dim();
    if weights.len() != m {
        return Err(TvError::WeightCount {
            expected: m,
            found: weights.len(),
        });
    }
    let layout = StackLayout::new(m, mesh.intervals());
    let mut lower = vec![0.0; layout.len()];
    let mut upper = vec![f64::INFINITY; layout.len()];
    for j in 0..m {
        lower[layout.control(j)]
            .iter_mut()
            .for_each(|v| *v = problem.lower_bounds()[j]);
        upper[layout.control(j)]
            .iter_mut()
            .for_each(|v| *v = problem.upper_bounds()[j]);
    }
    let equality = layout.equality();
    let objective = PenalizedObjective {
        problem,
        mesh,
        weights: weights.as_slice().to_vec(),
        layout,
    };
    Ok(PolyhedralNlp::new(
        Box::new(objective),
        lower,
        upper,
        equality,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn variation_examples() {
        assert_eq!(total_variation(&[0.3; 5]), 0.0);
        assert_eq!(total_variation(&[0.0, 1.0, 0.5]), 1.5);
        assert_eq!(total_variation(&[2.0]), 0.0);
    }

    #[test]
    fn decomposition_examples() {
        assert_eq!(
            tv_decompose(&[0.0, 1.0, 0.5]),
            (vec![1.0, 0.0], vec![0.0, 0.5])
        );
        assert_eq!(tv_decompose(&[0.4, 0.4]), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn equality_block_for_three_nodes() {
        let dense = StackLayout::new(1, 3).equality().to_dense();
        assert_eq!(dense[0], vec![-1.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert_eq!(dense[1], vec![0.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn weights_are_validated() {
        assert!(TvWeights::new(vec![0.0, 0.99]).is_ok());
        assert!(matches!(
            TvWeights::new(vec![0.1, 1.0]),
            Err(TvError::WeightOutOfRange { index: 1, .. })
        ));
        assert!(TvWeights::new(vec![-1e-3]).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let u = Array2::from_shape_fn((2, 4), |(j, k)| (j * 4 + k) as f64 * 0.1 - 0.3);
        let layout = StackLayout::new(2, 4);
        let z = layout.pack(u.view());
        assert_eq!(z.len(), 2 * 10);
        assert_eq!(layout.controls(&z), u);
        assert!(layout.equality().residual_norm(&z) < 1e-15);
    }

    proptest! {
        #[test]
        fn decomposition_invariants(u in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let (rise, fall) = tv_decompose(&u);
            let tv: f64 = rise.iter().chain(&fall).sum();
            prop_assert!((tv - total_variation(&u)).abs() <= 1e-14 * (1.0 + tv));
            for k in 0..rise.len() {
                prop_assert!(rise[k] >= 0.0 && fall[k] >= 0.0);
                prop_assert_eq!(rise[k] * fall[k], 0.0);
                prop_assert_eq!(rise[k] - fall[k], u[k + 1] - u[k]);
            }
        }

        #[test]
        fn penalty_matches_variation(rows in prop::collection::vec(-1.0f64..1.0, 6), rho in 0.0f64..0.99) {
            let u = Array2::from_shape_vec((2, 3), rows).unwrap();
            let layout = StackLayout::new(2, 3);
            let z = layout.pack(u.view());
            let expect = rho * (total_variation(&u.row(0).to_vec()) + total_variation(&u.row(1).to_vec()));
            prop_assert!((layout.penalty(&z, &[rho, rho]) - expect).abs() < 1e-14);
        }
    }
}
