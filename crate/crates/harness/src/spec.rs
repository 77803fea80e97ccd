//! Experiment descriptions and their validation.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use elim_core::integrators::{MethodConfig, DEFAULT_FP_TOLERANCE};
use elim_core::problems::{HamiltonianProblem, InvariantSelection, InvariantSet, ProblemParams};
use elim_core::{Integrator, MethodRegistry, ProblemRegistry};
use serde::{Deserialize, Deserializer, Serialize};

/// Environment variable that replaces the default fixed-point tolerance.
pub const TOLERANCE_ENV: &str = "ELIM_FP_TOL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Convergence,
    AlphaNorm,
    Iterations,
    Drift,
    Tableau,
}

/// One experiment, as read from a JSON config file and/or CLI flags.
///
/// `invariants` is imposed by `elim`/`ehbvm`; `monitor` (default: the same
/// set) is recorded along every trajectory. Step sizes and the horizon accept plain numbers or `pi` forms such
/// as `"pi/30"` and `"20pi"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub problem: String,
    pub eccentricity: Option<f64>,
    pub method: String,
    pub s: usize,
    pub k: usize,
    /// Defaults to `k`.
    pub r: Option<usize>,
    pub invariants: InvariantSelection,
    pub monitor: Option<InvariantSelection>,
    #[serde(deserialize_with = "de_step_list")]
    pub step_sizes: Vec<f64>,
    #[serde(deserialize_with = "de_step")]
    pub horizon: f64,
    /// Falls back to `ELIM_FP_TOL`, then to the library default.
    pub tol: Option<f64>,
    pub output: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            experiment: Experiment::Convergence,
            problem: "kepler".into(),
            eccentricity: None,
            method: "hbvm".into(),
            s: 3,
            k: 12,
            r: None,
            invariants: InvariantSelection::None,
            monitor: None,
            step_sizes: Vec::new(),
            horizon: 20.0 * PI,
            tol: None,
            output: PathBuf::from("out.csv"),
        }
    }
}

/// Parses `1.5`, `pi`, `pi/30`, `20pi`, `2*pi/7` and similar.
pub fn parse_step(text: &str) -> Result<f64> {
    let t = text.trim().to_ascii_lowercase().replace(['*', ' '], "");
    let value = if let Some(pos) = t.find("pi") {
        let (coef, rest) = (&t[..pos], &t[pos + 2..]);
        let coef = if coef.is_empty() {
            1.0
        } else {
            coef.parse::<f64>()?
        };
        let div = match rest.strip_prefix('/') {
            Some(d) => d.parse::<f64>()?,
            None if rest.is_empty() => 1.0,
            None => bail!("cannot parse `{text}`"),
        };
        coef * PI / div
    } else {
        t.parse::<f64>()
            .with_context(|| format!("cannot parse `{text}` as a number"))?
    };
    ensure!(value.is_finite(), "`{text}` is not finite");
    Ok(value)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

impl NumberOrText {
    fn value(self) -> Result<f64> {
        match self {
            Self::Number(x) => Ok(x),
            Self::Text(t) => parse_step(&t),
        }
    }
}

fn de_step<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    NumberOrText::deserialize(d)?
        .value()
        .map_err(serde::de::Error::custom)
}

fn de_step_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<NumberOrText>::deserialize(d)?
        .into_iter()
        .map(|x| x.value().map_err(serde::de::Error::custom))
        .collect()
}

/// Tolerance precedence: explicit value, then `ELIM_FP_TOL`, then the default.
pub fn resolve_tolerance(explicit: Option<f64>) -> Result<f64> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    match std::env::var(TOLERANCE_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .with_context(|| format!("{TOLERANCE_ENV}=`{v}` is not a number")),
        Err(_) => Ok(DEFAULT_FP_TOLERANCE),
    }
}

/// A spec that passed validation, with everything needed to run it.
pub struct Plan {
    pub spec: ExperimentSpec,
    pub tolerance: f64,
    pub problem: Arc<HamiltonianProblem>,
    /// Invariants recorded along every trajectory.
    pub monitor: Option<Arc<InvariantSet>>,
    pub method: Arc<dyn Integrator>,
    /// Steps per run, one entry per step size.
    pub step_counts: Vec<usize>,
}

impl ExperimentSpec {
    /// Checks the spec and instantiates problem and method. No output is written.
    pub fn plan(&self) -> Result<Plan> {
        let tolerance = resolve_tolerance(self.tol)?;
        ensure!(
            tolerance > 0.0,
            "tolerance must be positive, got {tolerance}"
        );
        ensure!(self.s >= 1, "s must be at least 1");
        ensure!(
            self.k >= self.s,
            "k = {} must be at least s = {}",
            self.k,
            self.s
        );
        if let Some(r) = self.r {
            ensure!(r >= self.s, "r = {r} must be at least s = {}", self.s);
        }
        if let Some(parent) = self.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure!(
                parent.is_dir(),
                "output directory {} does not exist",
                parent.display()
            );
        }

        let problems = ProblemRegistry::default();
        let family = problems.get(&self.problem)?;
        let problem = Arc::new(family.build(&ProblemParams {
            eccentricity: self.eccentricity,
        })?);
        let imposed_set = family.invariants(self.invariants)?.map(Arc::new);
        let monitor = match self.monitor {
            Some(sel) if sel != self.invariants => family.invariants(sel)?.map(Arc::new),
            _ => imposed_set.clone(),
        };

        let methods = MethodRegistry::default();
        let factory = methods.get(&self.method)?;
        let mut config =
            MethodConfig::new(self.r.unwrap_or(self.k), self.k, self.s).with_tolerance(tolerance);
        config = factory.normalize(config);
        let imposed = if factory.imposes_invariants() {
            imposed_set
        } else {
            None
        };
        let method: Arc<dyn Integrator> = factory
            .build(problem.clone(), imposed, config)
            .map(Arc::from)?;

        let step_counts = match self.experiment {
            Experiment::Tableau => Vec::new(),
            exp => {
                ensure!(
                    !self.step_sizes.is_empty(),
                    "at least one step size is required"
                );
                ensure!(
                    self.horizon > 0.0 && self.horizon.is_finite(),
                    "horizon must be positive, got {}",
                    self.horizon
                );
                if exp == Experiment::Drift {
                    ensure!(
                        self.step_sizes.len() == 1,
                        "drift takes exactly one step size, got {}",
                        self.step_sizes.len()
                    );
                }
                if exp == Experiment::AlphaNorm {
                    ensure!(
                        method.imposed_invariants().is_some(),
                        "alpha-norm needs a method that imposes invariants (elim or ehbvm)"
                    );
                }
                self.step_sizes
                    .iter()
                    .map(|&h| steps_for(h, self.horizon))
                    .collect::<Result<Vec<_>>>()?
            }
        };

        Ok(Plan {
            spec: self.clone(),
            tolerance,
            problem,
            monitor,
            method,
            step_counts,
        })
    }
}

/// Number of steps of size `h` covering `horizon` exactly.
fn steps_for(h: f64, horizon: f64) -> Result<usize> {
    ensure!(
        h > 0.0 && h.is_finite(),
        "step sizes must be positive, got {h}"
    );
    let n = horizon / h;
    let rounded = n.round();
    ensure!(
        rounded >= 1.0 && (n - rounded).abs() <= 1e-8 * n,
        "step size {h} does not divide the horizon {horizon}"
    );
    Ok(rounded as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_expressions() {
        assert_eq!(parse_step("0.1").unwrap(), 0.1);
        assert_eq!(parse_step("pi/30").unwrap(), PI / 30.0);
        assert_eq!(parse_step("20pi").unwrap(), 20.0 * PI);
        assert_eq!(parse_step("2*pi/7").unwrap(), 2.0 * PI / 7.0);
        assert_eq!(parse_step("PI").unwrap(), PI);
        assert!(parse_step("pi-3").is_err());
        assert!(parse_step("abc").is_err());
    }

    #[test]
    fn json_accepts_mixed_step_forms() {
        let spec: ExperimentSpec = serde_json::from_str(
            r#"{"experiment":"alpha_norm","method":"ehbvm","invariants":"L1",
                "step_sizes":["pi/30", 0.05],"horizon":"2pi"}"#,
        )
        .unwrap();
        assert_eq!(spec.experiment, Experiment::AlphaNorm);
        assert_eq!(spec.step_sizes, vec![PI / 30.0, 0.05]);
        assert_eq!(spec.horizon, 2.0 * PI);
        assert_eq!(spec.invariants, InvariantSelection::L1);
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn horizon_must_be_a_multiple_of_each_step() {
        assert_eq!(steps_for(PI / 30.0, 20.0 * PI).unwrap(), 600);
        assert_eq!(steps_for(0.1, 1000.0).unwrap(), 10000);
        assert!(steps_for(0.3, 1.0).is_err());
        assert!(steps_for(-0.1, 1.0).is_err());
    }

    fn spec(method: &str, inv: InvariantSelection, s: usize) -> ExperimentSpec {
        ExperimentSpec {
            method: method.into(),
            invariants: inv,
            s,
            step_sizes: vec![PI / 30.0],
            tol: Some(1e-14),
            ..Default::default()
        }
    }

    #[test]
    fn plans_reject_bad_configurations() {
        assert!(spec("hbvm", InvariantSelection::None, 3).plan().is_ok());
        assert!(spec("ehbvm", InvariantSelection::L1L2, 3).plan().is_ok());
        let e = spec("ehbvm", InvariantSelection::L1L2, 2)
            .plan()
            .err()
            .unwrap();
        assert!(e.to_string().contains("must exceed"), "{e}");
        assert!(spec("ehbvm", InvariantSelection::None, 3).plan().is_err());
        assert!(spec("rk4", InvariantSelection::None, 3).plan().is_err());
        let mut s = spec("hbvm", InvariantSelection::None, 3);
        s.k = 2;
        assert!(s.plan().is_err());
        let mut s = spec("hbvm", InvariantSelection::None, 3);
        s.problem = "pendulum".into();
        assert!(s.plan().is_err());
        let mut s = spec("hbvm", InvariantSelection::None, 3);
        s.step_sizes.clear();
        assert!(s.plan().is_err());
        let mut s = spec("hbvm", InvariantSelection::None, 3);
        s.experiment = Experiment::AlphaNorm;
        assert!(s.plan().is_err());
        let mut s = spec("hbvm", InvariantSelection::None, 3);
        s.output = PathBuf::from("/nonexistent-dir/x.csv");
        assert!(s.plan().is_err());
    }

    #[test]
    fn gauss_ignores_k() {
        let plan = spec("gauss", InvariantSelection::L1, 3).plan().unwrap();
        assert_eq!(plan.method.label(), "GAUSS3");
        assert!(plan.method.imposed_invariants().is_none());
        assert!(plan.monitor.is_some());
    }
}
