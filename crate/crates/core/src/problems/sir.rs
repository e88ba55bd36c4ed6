//! Epidemic model with vaccination `u` and treatment `v`.
//!
//! ```text
//! S' = γN - νS - βIS/N + ρR - κSu
//! I' = βIS/N - (ν + μ + α)I - ηIv
//! R' = -(ν + ρ)R + κSu + αI + ηIv
//! ```
//! with `N = S + I + R` and running cost `aI + bu + cv`.

use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::ocp::{ControlProblem, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    pub birth: f64,
    pub death: f64,
    pub infection: f64,
    pub disease_death: f64,
    pub recovery: f64,
    pub resensitization: f64,
    pub vaccine_efficacy: f64,
    pub treatment_efficacy: f64,
    pub infected_weight: f64,
    pub vaccination_weight: f64,
    pub treatment_weight: f64,
    pub horizon: f64,
    pub max_vaccination: f64,
    pub max_treatment: f64,
    pub susceptible0: f64,
    pub infected0: f64,
    pub recovered0: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        Self {
            birth: 0.00683,
            death: 0.00188,
            infection: 0.2426,
            disease_death: 0.005,
            recovery: 0.00002,
            resensitization: 0.007,
            vaccine_efficacy: 0.3,
            treatment_efficacy: 0.1,
            infected_weight: 5.0,
            vaccination_weight: 50.0,
            treatment_weight: 300.0,
            horizon: 50.0,
            max_vaccination: 1.0,
            max_treatment: 1.0,
            susceptible0: 1000.0,
            infected0: 10.0,
            recovered0: 0.0,
        }
    }
}

impl SirParams {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let rates = [
            self.birth,
            self.death,
            self.infection,
            self.disease_death,
            self.recovery,
            self.resensitization,
            self.vaccine_efficacy,
            self.treatment_efficacy,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(ProblemError::Domain(
                "epidemic rates must be finite and nonnegative".into(),
            ));
        }
        if !(self.max_vaccination > 0.0 && self.max_treatment > 0.0) {
            return Err(ProblemError::Domain("control caps must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ProblemError::Domain("horizon must be positive".into()));
        }
        if !(self.susceptible0 + self.infected0 + self.recovered0 > 0.0) {
            return Err(ProblemError::Domain(
                "initial population must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sir {
    params: SirParams,
    x0: [f64; 3],
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Sir {
    pub fn params(&self) -> &SirParams {
        &self.params
    }
}

pub fn sir_problem(params: SirParams) -> Result<Sir, ProblemError> {
    params.validate()?;
    Ok(Sir {
        params,
        x0: [params.susceptible0, params.infected0, params.recovered0],
        lo: [0.0, 0.0],
        hi: [params.max_vaccination, params.max_treatment],
    })
}

impl ControlProblem for Sir {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
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
    fn admissible_state(&self, x: &[f64]) -> bool {
        x[0] + x[1] + x[2] > 0.0
    }

    fn dynamics(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (s, i, r) = (x[0], x[1], x[2]);
        let n = s + i + r;
        let contagion = p.infection * i * s / n;
        out[0] = p.birth * n - p.death * s - contagion + p.resensitization * r
            - p.vaccine_efficacy * s * u[0];
        out[1] = contagion
            - (p.death + p.disease_death + p.recovery) * i
            - p.treatment_efficacy * i * u[1];
        out[2] = -(p.death + p.resensitization) * r
            + p.vaccine_efficacy * s * u[0]
            + p.recovery * i
            + p.treatment_efficacy * i * u[1];
    }

    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let p = &self.params;
        p.infected_weight * x[1] + p.vaccination_weight * u[0] + p.treatment_weight * u[1]
    }

    fn dynamics_state_jacobian(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (s, i, r) = (x[0], x[1], x[2]);
        let n = s + i + r;
        let cross = i * s / (n * n);
        // partials of βIS/N
        let c_s = p.infection * (i / n - cross);
        let c_i = p.infection * (s / n - cross);
        let c_r = -p.infection * cross;
        out[0] = p.birth - p.death - c_s - p.vaccine_efficacy * u[0];
        out[1] = p.birth - c_i;
        out[2] = p.birth - c_r + p.resensitization;
        out[3] = c_s;
        out[4] = c_i - (p.death + p.disease_death + p.recovery) - p.treatment_efficacy * u[1];
        out[5] = c_r;
        out[6] = p.vaccine_efficacy * u[0];
        out[7] = p.recovery + p.treatment_efficacy * u[1];
        out[8] = -(p.death + p.resensitization);
    }

    fn dynamics_control_jacobian(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        out[0] = -p.vaccine_efficacy * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = -p.treatment_efficacy * x[1];
        out[4] = p.vaccine_efficacy * x[0];
        out[5] = p.treatment_efficacy * x[1];
    }

    fn cost_state_gradient(&self, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = self.params.infected_weight;
        out[2] = 0.0;
    }

    fn cost_control_gradient(&self, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = self.params.vaccination_weight;
        out[1] = self.params.treatment_weight;
    }
}

/// Switching functions `(Φ_u, Φ_v)` on the control nodes.
pub fn sir_switching(params: &SirParams, traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let (x, lam) = (&traj.states, &traj.adjoints);
    (0..lam.ncols())
        .map(|k| {
            let (s, i) = (x[[0, k]], x[[1, k]]);
            let (ls, li, lr) = (lam[[0, k]], lam[[1, k]], lam[[2, k]]);
            (
                params.vaccination_weight + (lr - ls) * params.vaccine_efficacy * s,
                params.treatment_weight + (lr - li) * params.treatment_efficacy * i,
            )
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{rollout_state, Mesh};
    use ndarray::Array2;

    #[test]
    fn untreated_epidemic_depletes_susceptibles() {
        let prob = sir_problem(SirParams::default()).unwrap();
        let mesh = Mesh::new(50.0, 750).unwrap();
        let x = rollout_state(&prob, &mesh, Array2::zeros((2, 750)).view()).unwrap();
        // births outweigh infections until I has grown for a few time units
        let node = |t: f64| (t / mesh.step()).round() as usize;
        for k in node(4.0)..node(10.0) {
            assert!(x[[0, k + 1]] < x[[0, k]], "S rises at node {k}");
        }
        assert!(x[[0, node(10.0)]] < x[[0, 0]]);
    }

    #[test]
    fn switching_functions_match_gradient() {
        let p = SirParams::default();
        let prob = sir_problem(p).unwrap();
        let mesh = Mesh::new(50.0, 300).unwrap();
        let u = Array2::from_shape_fn((2, 300), |(j, k)| ((k + 7 * j) as f64 * 0.13).cos().abs());
        let traj = Trajectory::evaluate(&prob, &mesh, u).unwrap();
        let grad = traj.gradient(&prob, &mesh).unwrap();
        let (pu, pv) = sir_switching(&p, &traj);
        let h = mesh.step();
        for k in 0..300 {
            assert!((pu[k] - grad[[0, k]] / h).abs() <= 1e-13 * (1.0 + pu[k].abs()));
            assert!((pv[k] - grad[[1, k]] / h).abs() <= 1e-13 * (1.0 + pv[k].abs()));
        }
        assert_eq!(pu[299], 50.0);
        assert_eq!(pv[299], 300.0);
    }

    #[test]
    fn empty_population_is_rejected() {
        let p = SirParams {
            susceptible0: 0.0,
            infected0: 0.0,
            ..SirParams::default()
        };
        assert!(sir_problem(p).is_err());
    }
}
