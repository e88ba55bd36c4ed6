//! Annual plant allocating growth between vegetative (`x1`) and reproductive
//! (`x2`) weight: `x1' = u x1`, `x2' = (1 - u) x1`, minimizing `-∫ ln x2`.

use serde::{Deserialize, Serialize};

use super::roots::bracketed_root;
use super::ProblemError;
use crate::ocp::ControlProblem;

/// Smallest initial reproductive weight for which the cost stays finite.
pub const MIN_REPRODUCTIVE_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub horizon: f64,
    pub vegetative0: f64,
    pub reproductive0: f64,
}

impl PlantParams {
    pub fn new(horizon: f64, vegetative0: f64, reproductive0: f64) -> Self {
        Self {
            horizon,
            vegetative0,
            reproductive0,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.reproductive0 / self.vegetative0
    }

    /// Reference parameter sets for the three singular cases.
    pub fn case(case: PlantCase) -> Option<Self> {
        match case {
            PlantCase::SingularStart => Some(Self::new(5.0, 4.0, 1.0)),
            PlantCase::ReproductiveStart => Some(Self::new(5.0, 1.0, 1e-4)),
            PlantCase::VegetativeStart => Some(Self::new(5.0, 1.0, 2.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ProblemError::Domain(
                "plant horizon must be positive".into(),
            ));
        }
        if !(self.vegetative0.is_finite() && self.vegetative0 > 0.0) {
            return Err(ProblemError::Domain(
                "initial vegetative weight must be positive".into(),
            ));
        }
        if !(self.reproductive0.is_finite() && self.reproductive0 >= MIN_REPRODUCTIVE_WEIGHT) {
            return Err(ProblemError::Domain(format!(
                "initial reproductive weight must be at least {MIN_REPRODUCTIVE_WEIGHT}"
            )));
        }
        Ok(())
    }
}

/// Structure of the optimal allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlantCase {
    /// 2a: singular from the start.
    SingularStart,
    /// 2b: reproductive, then singular.
    ReproductiveStart,
    /// 2c: vegetative, then singular.
    VegetativeStart,
    BangBang,
    PurelyReproductive,
}

impl PlantCase {
    pub fn tag(&self) -> &'static str {
        match self {
            PlantCase::SingularStart => "2a",
            PlantCase::ReproductiveStart => "2b",
            PlantCase::VegetativeStart => "2c",
            PlantCase::BangBang => "bang-bang",
            PlantCase::PurelyReproductive => "purely-reproductive",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "2a" => PlantCase::SingularStart,
            "2b" => PlantCase::ReproductiveStart,
            "2c" => PlantCase::VegetativeStart,
            "bang-bang" => PlantCase::BangBang,
            "purely-reproductive" => PlantCase::PurelyReproductive,
            _ => return None,
        })
    }
}

/// Constants of the final singular-to-reproductive junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConstants {
    /// Length of the final reproductive phase, `T - t2`.
    pub tail: f64,
    /// `x2(t2) / x1(t2)`.
    pub junction_ratio: f64,
    /// `x2(T) / x1(T)`.
    pub terminal_ratio: f64,
}

/// Solves `w = ln(1 + w + w²)` for `w = 1/z`, then `y = 1 + w`.
pub fn plant_constants() -> PlantConstants {
    let z = bracketed_root(
        |z: f64| 1.0 / z - (1.0 + 1.0 / z + 1.0 / (z * z)).ln(),
        1e-6,
        10.0,
        1e-15,
    )
    .expect("the junction equation has a root in (1e-6, 10)");
    let y = 1.0 + 1.0 / z;
    PlantConstants {
        tail: y,
        junction_ratio: z,
        terminal_ratio: y + z,
    }
}

pub fn plant_classify(params: &PlantParams) -> PlantCase {
    let c = plant_constants();
    let (t, r) = (params.horizon, params.ratio());
    if t <= c.terminal_ratio {
        if r <= c.terminal_ratio - t {
            return PlantCase::PurelyReproductive;
        }
        return PlantCase::BangBang;
    }
    if r >= c.junction_ratio * (t - c.tail).exp() {
        return PlantCase::BangBang;
    }
    let pivot = 1.0 / (t - 1.0);
    if (r - pivot).abs() <= 1e-9 * pivot {
        PlantCase::SingularStart
    } else if r < pivot {
        PlantCase::ReproductiveStart
    } else {
        PlantCase::VegetativeStart
    }
}

#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    x0: [f64; 2],
    lo: [f64; 1],
    hi: [f64; 1],
}

impl Plant {
    pub fn params(&self) -> &PlantParams {
        &self.params
    }
}

pub fn plant_problem(params: PlantParams) -> Result<Plant, ProblemError> {
    params.validate()?;
    Ok(Plant {
        params,
        x0: [params.vegetative0, params.reproductive0],
        lo: [0.0],
        hi: [1.0],
    })
}

impl ControlProblem for Plant {
    fn state_dim(&self) -> usize {
        2
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
        out[0] = u[0] * x[0];
        out[1] = (1.0 - u[0]) * x[0];
    }
    fn running_cost(&self, x: &[f64], _u: &[f64]) -> f64 {
        if x[1] > 0.0 {
            -x[1].ln()
        } else {
            f64::NAN
        }
    }
    fn dynamics_state_jacobian(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = u[0];
        out[1] = 0.0;
        out[2] = 1.0 - u[0];
        out[3] = 0.0;
    }
    fn dynamics_control_jacobian(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = x[0];
        out[1] = -x[0];
    }
    fn cost_state_gradient(&self, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = -1.0 / x[1];
    }
    fn cost_control_gradient(&self, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
}

/// Pointwise values of the analytic solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantPoint {
    pub control: f64,
    pub vegetative: f64,
    pub reproductive: f64,
    pub adjoint_vegetative: f64,
    pub adjoint_reproductive: f64,
}

/// Analytic optimum for the cases with a singular arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantExact {
    pub params: PlantParams,
    pub case: PlantCase,
    pub constants: PlantConstants,
    /// Entry into the singular arc (0 when it starts singular).
    pub entry: f64,
    /// Exit from the singular arc into pure reproduction.
    pub exit: f64,
    x1_entry: f64,
    x2_entry: f64,
    x1_exit: f64,
    x2_exit: f64,
    x2_end: f64,
}

pub fn plant_exact(params: PlantParams) -> Result<PlantExact, ProblemError> {
    params.validate()?;
    let case = plant_classify(&params);
    let constants = plant_constants();
    let (t, x10, x20, r) = (
        params.horizon,
        params.vegetative0,
        params.reproductive0,
        params.ratio(),
    );
    let exit = t - constants.tail;
    let entry = match case {
        PlantCase::SingularStart => 0.0,
        PlantCase::ReproductiveStart => {
            // (T - 1 - t1)(t1 + r) = 1
            let disc = (t - 1.0 - r).powi(2) + 4.0 * (r * (t - 1.0) - 1.0);
            let roots = [
                0.5 * (t - 1.0 - r - disc.sqrt()),
                0.5 * (t - 1.0 - r + disc.sqrt()),
            ];
            let inside: Vec<f64> = roots
                .iter()
                .copied()
                .filter(|&s| s > 0.0 && s < exit)
                .collect();
            match inside.as_slice() {
                [one] => *one,
                _ => {
                    return Err(ProblemError::Consistency(
                        "no unique entry time in (0, t2)".into(),
                    ))
                }
            }
        }
        PlantCase::VegetativeStart => {
            bracketed_root(|s| r * (-s).exp() - 1.0 / (t - 1.0 - s), 0.0, exit, 1e-14).ok_or_else(
                || ProblemError::Consistency("entry time not bracketed in (0, t2)".into()),
            )?
        }
        other => {
            return Err(ProblemError::Domain(format!(
                "no singular arc for case {}",
                other.tag()
            )))
        }
    };
    let (x1_entry, x2_entry) = match case {
        PlantCase::ReproductiveStart => (x10, x10 * entry + x20),
        PlantCase::VegetativeStart => (x10 * entry.exp(), x20),
        _ => (x10, x20),
    };
    let x2_exit = x2_entry * (exit - entry).exp();
    let x1_exit = (t - 1.0 - exit) * x2_exit;
    let x2_end = x1_exit * (t - exit) + x2_exit;
    Ok(PlantExact {
        params,
        case,
        constants,
        entry,
        exit,
        x1_entry,
        x2_entry,
        x1_exit,
        x2_exit,
        x2_end,
    })
}

impl PlantExact {
    pub fn at(&self, t: f64) -> PlantPoint {
        let (x10, x20) = (self.params.vegetative0, self.params.reproductive0);
        let horizon = self.params.horizon;
        if t < self.entry {
            if self.case == PlantCase::ReproductiveStart {
                let x2 = x10 * t + x20;
                let e2 = self.x2_entry;
                let l2 = (x2 / e2).ln() / x10 - 1.0 / e2;
                let l1 = x2 / (x10 * x10) * (e2 / x2).ln()
                    + (x2 - e2) / (x10 * x10)
                    + (x2 - e2) / (e2 * x10)
                    - 1.0 / e2;
                PlantPoint {
                    control: 0.0,
                    vegetative: x10,
                    reproductive: x2,
                    adjoint_vegetative: l1,
                    adjoint_reproductive: l2,
                }
            } else {
                PlantPoint {
                    control: 1.0,
                    vegetative: x10 * t.exp(),
                    reproductive: x20,
                    adjoint_vegetative: -(self.entry - t).exp() / x20,
                    adjoint_reproductive: (t - self.entry) / x20 - 1.0 / x20,
                }
            }
        } else if t <= self.exit {
            let x2 = self.x2_entry * (t - self.entry).exp();
            let lam = -(self.entry - t).exp() / self.x2_entry;
            PlantPoint {
                control: 1.0 - 1.0 / (horizon - 1.0 - t),
                vegetative: (horizon - 1.0 - t) * x2,
                reproductive: x2,
                adjoint_vegetative: lam,
                adjoint_reproductive: lam,
            }
        } else {
            let x1 = self.x1_exit;
            let x2 = x1 * (t - self.exit) + self.x2_exit;
            let log = (x2 / self.x2_end).ln();
            PlantPoint {
                control: 0.0,
                vegetative: x1,
                reproductive: x2,
                adjoint_vegetative: -(x2 * log + self.x2_end - x2) / (x1 * x1),
                adjoint_reproductive: log / x1,
            }
        }
    }

    pub fn control(&self, t: f64) -> f64 {
        self.at(t).control
    }
}
