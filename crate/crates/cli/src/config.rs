//! Run configuration: defaults, a flat TOML file, then command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use singctrl_core::analysis::{Backend, ReferenceControl};
use singctrl_core::ocp::ControlProblem;
use singctrl_core::problems::{
    fishery_exact, fishery_problem, plant_exact, plant_problem, sir_problem, FisheryExact,
    FisheryParams, PlantCase, PlantExact, PlantParams, SirParams,
};
use singctrl_core::solver::SolverConfig;
use toml::{Table, Value};

use crate::CliError;

/// Mesh steps used by `convergence` when none are given.
pub const DEFAULT_STEPS: [f64; 7] = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125];

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Fishery(FisheryParams),
    Plant(PlantParams),
    Sir(SirParams),
}

/// Analytic solution available for comparison.
#[derive(Debug, Clone, Copy)]
pub enum Oracle {
    Fishery(FisheryExact),
    Plant(PlantExact),
}

impl ProblemSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ProblemSpec::Fishery(_) => "fishery",
            ProblemSpec::Plant(_) => "plant",
            ProblemSpec::Sir(_) => "sir",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ControlProblem>, CliError> {
        let built: Arc<dyn ControlProblem> = match *self {
            ProblemSpec::Fishery(p) => Arc::new(fishery_problem(p).map_err(config)?),
            ProblemSpec::Plant(p) => Arc::new(plant_problem(p).map_err(config)?),
            ProblemSpec::Sir(p) => Arc::new(sir_problem(p).map_err(config)?),
        };
        Ok(built)
    }

    pub fn oracle(&self) -> Option<Oracle> {
        match *self {
            ProblemSpec::Fishery(p) => fishery_exact(p).ok().map(Oracle::Fishery),
            ProblemSpec::Plant(p) => plant_exact(p).ok().map(Oracle::Plant),
            ProblemSpec::Sir(_) => None,
        }
    }
}

impl Oracle {
    pub fn control(&self, t: f64) -> f64 {
        match self {
            Oracle::Fishery(e) => e.control(t),
            Oracle::Plant(e) => e.control(t),
        }
    }

    pub fn states(&self, t: f64) -> Vec<f64> {
        match self {
            Oracle::Fishery(e) => vec![e.state(t)],
            Oracle::Plant(e) => {
                let p = e.at(t);
                vec![p.vegetative, p.reproductive]
            }
        }
    }

    /// Switching times of the analytic control.
    pub fn switches(&self) -> Vec<f64> {
        match self {
            Oracle::Fishery(e) => vec![e.switch_time],
            Oracle::Plant(e) if e.entry > 0.0 => vec![e.entry, e.exit],
            Oracle::Plant(e) => vec![e.exit],
        }
    }

    pub fn reference(self) -> Box<ReferenceControl> {
        Box::new(move |_, t| self.control(t))
    }
}

/// Values a user may set from the command line; `None` defers to the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub problem: Option<String>,
    pub case: Option<String>,
    pub n: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub rho: Option<Vec<f64>>,
    pub backend: Option<String>,
    pub initial: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub steps: Option<Vec<f64>>,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub case: Option<PlantCase>,
    pub intervals: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub rho: Vec<f64>,
    pub backend: Backend,
    pub initial: Vec<f64>,
    pub out: PathBuf,
    pub steps: Vec<f64>,
}

impl RunConfig {
    pub fn load(cli: &Overrides) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(path) => read_table(path)?,
            None => Table::new(),
        };
        Self::resolve(cli, file)
    }

    /// Merges `file` under the command-line values and validates the result.
    pub fn resolve(cli: &Overrides, mut file: Table) -> Result<Self, CliError> {
        let problem_id = match &cli.problem {
            Some(p) => p.clone(),
            None => take_string(&mut file, "problem")?.unwrap_or_else(|| "fishery".into()),
        };
        let case_tag = match &cli.case {
            Some(c) => Some(c.clone()),
            None => take_string(&mut file, "case")?,
        };
        let case = match (&problem_id[..], case_tag) {
            ("plant", tag) => {
                let tag = tag.unwrap_or_else(|| "2a".into());
                let case = PlantCase::from_tag(&tag)
                    .filter(|c| PlantParams::case(*c).is_some())
                    .ok_or_else(|| config(format!("case: expected 2a, 2b or 2c, got {tag:?}")))?;
                Some(case)
            }
            (_, Some(tag)) => {
                return Err(config(format!(
                    "case: {tag:?} only applies to the plant problem"
                )))
            }
            (_, None) => None,
        };

        let n = take_f64s(&mut file, "n")?;
        let tol = take_f64s(&mut file, "tol")?;
        let max_iters = take_f64s(&mut file, "max_iters")?;
        let rho = take_f64s(&mut file, "rho")?;
        let backend = take_string(&mut file, "backend")?;
        let initial = take_f64s(&mut file, "initial")?;
        let out = take_string(&mut file, "out")?;
        let steps = take_f64s(&mut file, "steps")?;

        let problem = match &problem_id[..] {
            "fishery" => {
                ProblemSpec::Fishery(apply_overrides(FisheryParams::default(), &mut file)?)
            }
            "plant" => {
                let base =
                    PlantParams::case(case.expect("plant case resolved")).expect("singular case");
                ProblemSpec::Plant(apply_overrides(base, &mut file)?)
            }
            "sir" => ProblemSpec::Sir(apply_overrides(SirParams::default(), &mut file)?),
            other => {
                return Err(config(format!(
                    "problem: unknown problem {other:?} (fishery, plant, sir)"
                )))
            }
        };

        let intervals = match (cli.n, n) {
            (Some(v), _) => v,
            (None, Some(v)) => single("n", &v).and_then(|x| as_count("n", x))?,
            (None, None) => 750,
        };
        let tol = match (cli.tol, tol) {
            (Some(v), _) => v,
            (None, Some(v)) => single("tol", &v)?,
            (None, None) => 1e-10,
        };
        let max_iters = match (cli.max_iters, max_iters) {
            (Some(v), _) => v,
            (None, Some(v)) => single("max_iters", &v).and_then(|x| as_count("max_iters", x))?,
            (None, None) => SolverConfig::default().max_iters,
        };
        let default_rho = if matches!(problem, ProblemSpec::Fishery(_)) {
            1e-2
        } else {
            0.0
        };
        let rho = cli.rho.clone().or(rho).unwrap_or_else(|| vec![default_rho]);
        let backend = cli
            .backend
            .clone()
            .or(backend)
            .unwrap_or_else(|| "polyhedral".into())
            .parse::<Backend>()
            .map_err(|e| config(format!("backend: {e}")))?;
        let initial = cli.initial.clone().or(initial).unwrap_or_else(|| vec![0.0]);
        let out = cli
            .out
            .clone()
            .or(out.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        let steps = cli
            .steps
            .clone()
            .or(steps)
            .unwrap_or_else(|| DEFAULT_STEPS.to_vec());

        let cfg = Self {
            problem,
            case,
            intervals,
            tol,
            max_iters,
            rho,
            backend,
            initial,
            out,
            steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.intervals < 2 {
            return Err(config(format!(
                "n: need at least 2 intervals, got {}",
                self.intervals
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(config(format!("tol: must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(config("max_iters: must be positive"));
        }
        if self.rho.is_empty() {
            return Err(config("rho: list is empty"));
        }
        for (i, r) in self.rho.iter().enumerate() {
            if !(0.0..1.0).contains(r) {
                return Err(config(format!("rho[{i}] = {r} is outside [0, 1)")));
            }
        }
        if self.initial.is_empty() || self.initial.iter().any(|v| !v.is_finite()) {
            return Err(config("initial: need one finite value or one per channel"));
        }
        if self.steps.is_empty() || self.steps.iter().any(|h| !(*h > 0.0)) {
            return Err(config("steps: need at least one positive mesh step"));
        }
        let m = self.channels()?;
        if self.initial.len() != 1 && self.initial.len() != m {
            return Err(config(format!(
                "initial: expected 1 or {m} values, got {}",
                self.initial.len()
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> Result<usize, CliError> {
        Ok(self.problem.build()?.control_dim())
    }

    /// One weight per channel for a single solve.
    pub fn channel_weights(&self) -> Result<Vec<f64>, CliError> {
        let m = self.channels()?;
        match self.rho.len() {
            1 => Ok(vec![self.rho[0]; m]),
            k if k == m => Ok(self.rho.clone()),
            k => Err(config(format!(
                "rho: expected 1 or {m} values for a single solve, got {k}"
            ))),
        }
    }

    pub fn initial_guess(&self) -> Result<Vec<f64>, CliError> {
        let m = self.channels()?;
        Ok(if self.initial.len() == 1 {
            vec![self.initial[0]; m]
        } else {
            self.initial.clone()
        })
    }
}

pub fn config(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let table: Table = text
        .parse()
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(config(format!("{key}: nested tables are not supported")));
    }
    Ok(table)
}

fn take_string(file: &mut Table, key: &str) -> Result<Option<String>, CliError> {
    match file.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(config(format!("{key}: expected a string, got {other}"))),
    }
}

fn number(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(config(format!("{key}: expected a number, got {other}"))),
    }
}

// A scalar or an array of numbers.
fn take_f64s(file: &mut Table, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    match file.remove(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| number(key, v))
            .collect::<Result<_, _>>()
            .map(Some),
        Some(v) => Ok(Some(vec![number(key, &v)?])),
    }
}

fn single(key: &str, values: &[f64]) -> Result<f64, CliError> {
    match values {
        [v] => Ok(*v),
        _ => Err(config(format!("{key}: expected a single value"))),
    }
}

fn as_count(key: &str, v: f64) -> Result<usize, CliError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(config(format!(
            "{key}: expected a nonnegative integer, got {v}"
        )))
    }
}

/// Replaces fields of `base` with the remaining keys of `file`.
fn apply_overrides<P: Serialize + DeserializeOwned>(
    base: P,
    file: &mut Table,
) -> Result<P, CliError> {
    let mut fields = match Value::try_from(base).map_err(config)? {
        Value::Table(t) => t,
        _ => unreachable!("parameter sets serialize to tables"),
    };
    for (key, value) in std::mem::take(file) {
        if !fields.contains_key(&key) {
            let known: Vec<&str> = fields.keys().map(|k| k.as_str()).collect();
            return Err(config(format!(
                "{key}: unknown parameter (expected one of {})",
                known.join(", ")
            )));
        }
        fields.insert(key.clone(), Value::Float(number(&key, &value)?));
    }
    Value::Table(fields).try_into().map_err(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Table {
        text.parse().unwrap()
    }

    #[test]
    fn defaults_follow_problem() {
        let cfg = RunConfig::resolve(&Overrides::default(), Table::new()).unwrap();
        assert_eq!(cfg.problem, ProblemSpec::Fishery(FisheryParams::default()));
        assert_eq!(
            (cfg.intervals, cfg.tol, cfg.rho.clone()),
            (750, 1e-10, vec![1e-2])
        );
        let sir = Overrides {
            problem: Some("sir".into()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&sir, Table::new()).unwrap();
        assert_eq!((cfg.tol, cfg.rho.clone()), (1e-10, vec![0.0]));
        assert_eq!(cfg.initial_guess().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn flags_override_file() {
        let file =
            parse("problem = \"plant\"\ncase = \"2b\"\nn = 300\nrho = [0.1, 0.2]\nhorizon = 4\n");
        let cli = Overrides {
            n: Some(100),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&cli, file).unwrap();
        assert_eq!(cfg.intervals, 100);
        assert_eq!(cfg.rho, vec![0.1, 0.2]);
        assert_eq!(cfg.case, Some(PlantCase::ReproductiveStart));
        assert_eq!(
            cfg.problem,
            ProblemSpec::Plant(PlantParams::new(4.0, 1.0, 1e-4))
        );
    }

    #[test]
    fn validation_names_the_field() {
        let err = |cli: Overrides, text: &str| {
            RunConfig::resolve(&cli, parse(text))
                .unwrap_err()
                .to_string()
        };
        assert!(err(
            Overrides {
                rho: Some(vec![1.5]),
                ..Default::default()
            },
            ""
        )
        .contains("rho"));
        assert!(err(Overrides::default(), "rho = []").contains("rho"));
        assert!(err(Overrides::default(), "n = 1").contains("n:"));
        assert!(err(Overrides::default(), "tol = 0").contains("tol"));
        assert!(err(Overrides::default(), "price = \"x\"").contains("price"));
        assert!(err(Overrides::default(), "growth = 1.0").contains("unknown parameter"));
        assert!(err(Overrides::default(), "case = \"2a\"").contains("plant"));
        assert!(err(Overrides::default(), "backend = \"simplex\"").contains("backend"));
        assert!(err(
            Overrides {
                problem: Some("plant".into()),
                case: Some("2d".into()),
                ..Default::default()
            },
            ""
        )
        .contains("case"));
    }

    #[test]
    fn weights_broadcast_or_match_channels() {
        let cli = Overrides {
            problem: Some("sir".into()),
            rho: Some(vec![0.1]),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&cli, Table::new()).unwrap();
        assert_eq!(cfg.channel_weights().unwrap(), vec![0.1, 0.1]);
        let cfg = RunConfig {
            rho: vec![0.1, 0.2, 0.3],
            ..cfg
        };
        assert!(cfg.channel_weights().is_err());
    }

    #[test]
    fn oracle_switches() {
        let cli = Overrides {
            problem: Some("plant".into()),
            case: Some("2b".into()),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&cli, Table::new()).unwrap();
        let s = cfg.problem.oracle().unwrap().switches();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 0.2678).abs() < 1e-3);
        assert!(ProblemSpec::Sir(SirParams::default()).oracle().is_none());
    }
}
