//! Logistic fishery harvested at effort `u ∈ [0, M]`, written as a minimization.
//!
//! `x' = x(1 - x) - q u x`, running cost `(c - p q x) u` (negated profit).

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::ocp::ControlProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisheryParams {
    pub horizon: f64,
    pub price: f64,
    pub catchability: f64,
    pub cost: f64,
    pub max_effort: f64,
    pub initial_stock: f64,
}

impl Default for FisheryParams {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            price: 2.0,
            catchability: 2.0,
            cost: 1.0,
            max_effort: 1.0,
            initial_stock: 0.625,
        }
    }
}

impl FisheryParams {
    fn pq(&self) -> f64 {
        self.price * self.catchability
    }

    /// `0 < pq - c < 2 p q² M`.
    pub fn has_admissible_margin(&self) -> bool {
        let margin = self.pq() - self.cost;
        margin > 0.0 && margin < 2.0 * self.pq() * self.catchability * self.max_effort
    }

    /// Initial stock sits at the singular level.
    pub fn starts_on_singular_level(&self) -> bool {
        (self.initial_stock - self.singular_state()).abs() <= 1e-12
    }

    pub fn singular_control(&self) -> f64 {
        (self.pq() - self.cost) / (2.0 * self.pq() * self.catchability)
    }

    pub fn singular_state(&self) -> f64 {
        (self.cost + self.pq()) / (2.0 * self.pq())
    }

    pub fn singular_adjoint(&self) -> f64 {
        self.price * (self.cost - self.pq()) / (self.cost + self.pq())
    }

    /// Second-order sign along the singular arc; negative means the arc is admissible.
    pub fn legendre_clebsch(&self) -> f64 {
        let (p, q, c) = (self.price, self.catchability, self.cost);
        let pq = p * q;
        -3.0 * c * c / (4.0 * p)
            - c * q
            - p * q * q / 4.0
            - (pq - c) * (c + pq) * (c + pq) / (8.0 * p * p * q * q)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let all = [
            self.horizon,
            self.price,
            self.catchability,
            self.cost,
            self.max_effort,
            self.initial_stock,
        ];
        if all.iter().any(|v| !v.is_finite()) || self.horizon <= 0.0 || self.max_effort <= 0.0 {
            return Err(ProblemError::Domain(
                "fishery parameters must be finite with T, M > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fishery {
    params: FisheryParams,
    x0: [f64; 1],
    lo: [f64; 1],
    hi: [f64; 1],
}

impl Fishery {
    pub fn params(&self) -> &FisheryParams {
        &self.params
    }
}

pub fn fishery_problem(params: FisheryParams) -> Result<Fishery, ProblemError> {
    params.validate()?;
    Ok(Fishery {
        params,
        x0: [params.initial_stock],
        lo: [0.0],
        hi: [params.max_effort],
    })
}

impl ControlProblem for Fishery {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        self.params.horizon
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn lower_bounds(&self) -> &[f64] {
        &self.lo
    }
    fn upper_bounds(&self) -> &[f64] {
        &self.hi
    }
    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = x[0] * (1.0 - x[0]) - self.params.catchability * u[0] * x[0];
    }
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.params.cost - self.params.pq() * x[0]) * u[0]
    }
    fn dynamics_state_jacobian(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = 1.0 - 2.0 * x[0] - self.params.catchability * u[0];
    }
    fn dynamics_control_jacobian(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = -self.params.catchability * x[0];
    }
    fn cost_state_gradient(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = -self.params.pq() * u[0];
    }
    fn cost_control_gradient(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = self.params.cost - self.params.pq() * x[0];
    }
}

/// Analytic optimum: singular until `switch_time`, then full effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheryExact {
    pub params: FisheryParams,
    pub singular_control: f64,
    pub singular_state: f64,
    pub singular_adjoint: f64,
    pub switch_time: f64,
    /// Growth rate under full effort, `1 - qM`.
    pub rate: f64,
    pub gap: f64,
    pub scale: f64,
}

pub fn fishery_exact(params: FisheryParams) -> Result<FisheryExact, ProblemError> {
    params.validate()?;
    if !params.has_admissible_margin() {
        return Err(ProblemError::Domain(
            "fishery requires 0 < pq - c < 2pq²M".into(),
        ));
    }
    if !params.starts_on_singular_level() {
        return Err(ProblemError::Domain(
            "fishery closed form requires the initial stock at (c + pq)/(2pq)".into(),
        ));
    }
    let (p, q, c, m, t_end) = (
        params.price,
        params.catchability,
        params.cost,
        params.max_effort,
        params.horizon,
    );
    let pq = p * q;
    let rate = 1.0 - q * m;
    let gap = (2.0 * rate * pq - c - pq).abs();
    let num = -gap * (pq - c) - 2.0 * gap * c * q * m + q * m * (c + pq) * (c + pq);
    let den = (c + pq) * ((c - pq) + 2.0 * pq * q * m - gap * q * m);
    let ratio = num / den;
    if !(ratio > 0.0) || rate == 0.0 {
        return Err(ProblemError::Domain(
            "switch-time formula has no real solution".into(),
        ));
    }
    let switch_time = t_end - ratio.ln() / rate;
    if !(0.0..=t_end).contains(&switch_time) {
        return Err(ProblemError::Domain(format!(
            "switch time {switch_time} outside [0, T]"
        )));
    }
    let scale = (c + pq) * (-rate * switch_time).exp() / gap;
    Ok(FisheryExact {
        params,
        singular_control: params.singular_control(),
        singular_state: params.singular_state(),
        singular_adjoint: params.singular_adjoint(),
        switch_time,
        rate,
        gap,
        scale,
    })
}

impl FisheryExact {
    pub fn control(&self, t: f64) -> f64 {
        if t < self.switch_time {
            self.singular_control
        } else {
            self.params.max_effort
        }
    }

    fn growth(&self, t: f64) -> f64 {
        -1.0 + self.scale * (self.rate * t).exp()
    }

    pub fn state(&self, t: f64) -> f64 {
        if t < self.switch_time {
            self.singular_state
        } else {
            self.rate * self.scale * (self.rate * t).exp() / self.growth(t)
        }
    }

    pub fn adjoint(&self, t: f64) -> f64 {
        if t < self.switch_time {
            return self.singular_adjoint;
        }
        let (a, ts) = (self.rate, self.switch_time);
        let p = &self.params;
        let ratio = self.growth(t) / self.growth(ts);
        let drift = p.price * p.catchability * p.max_effort / a;
        ratio
            * ratio
            * (a * (ts - t)).exp()
            * (self.singular_adjoint + drift / ratio * ((a * (t - ts)).exp() - 1.0))
    }

    pub fn switching(&self, t: f64) -> f64 {
        let p = &self.params;
        let x = self.state(t);
        p.cost - p.pq() * x - p.catchability * self.adjoint(t) * x
    }

    /// Optimal profit `∫ (p q x - c) u dt` by adaptive Simpson quadrature.
    pub fn profit(&self) -> f64 {
        let p = self.params;
        let f = |t: f64| (p.pq() * self.state(t) - p.cost) * self.control(t);
        simpson(&f, 0.0, self.switch_time, 4000) + simpson(&f, self.switch_time, p.horizon, 4000)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let t = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    s * h / 3.0
}

/// `ψ_k = c - p q x_k - q λ_k x_k` on the control nodes.
pub fn fishery_switching(
    params: &FisheryParams,
    x: ArrayView2<f64>,
    lam: ArrayView2<f64>,
) -> Vec<f64> {
    (0..lam.ncols())
        .map(|k| {
            let (xk, lk) = (x[[0, k]], lam[[0, k]]);
            params.cost - params.pq() * xk - params.catchability * lk * xk
        })
        .collect()
}
