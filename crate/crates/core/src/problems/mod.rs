//! Benchmark problems with their analytic reference solutions.

mod fishery;
mod plant;
pub mod roots;
mod sir;

use thiserror::Error;

pub use fishery::{
    fishery_exact, fishery_problem, fishery_switching, Fishery, FisheryExact, FisheryParams,
};
pub use plant::{
    plant_classify, plant_constants, plant_exact, plant_problem, Plant, PlantCase, PlantConstants,
    PlantExact, PlantParams, PlantPoint, MIN_REPRODUCTIVE_WEIGHT,
};
pub use sir::{sir_problem, sir_switching, Sir, SirParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("parameter domain: {0}")]
    Domain(String),
    #[error("internal consistency: {0}")]
    Consistency(String),
}
