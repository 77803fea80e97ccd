//! Steppers for HBVM(k,s), ELIM(r,k,s) and the s-stage Gauss method.
//!
//! Every method implements [`Integrator`]; a [`MethodRegistry`] maps method
//! names (`gauss`, `hbvm`, `elim`, `ehbvm`) to factories so that the harness
//! can pick one at runtime.

mod engine;
mod trajectory;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ElimError, Result};
use crate::problems::{HamiltonianProblem, InvariantSet};
use crate::State;

pub use engine::{correction_powers, stage_polynomial, StepKernel};
pub use trajectory::{integrate, StepRecord, Trajectory};

pub const DEFAULT_FP_TOLERANCE: f64 = 1e-14;
pub const DEFAULT_FP_MAX_ITERS: usize = 200;
pub const DEFAULT_GAMMA_FALLBACK_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Number of stage coefficients (polynomial degree).
    pub s: usize,
    /// Gauss points for the Hamiltonian quadrature.
    pub k: usize,
    /// Gauss points for the invariant quadrature; ignored when `ν = 0`.
    pub r: usize,
    pub fp_tolerance: f64,
    pub fp_max_iters: usize,
    pub warm_start: bool,
    /// Largest accepted 1-norm condition number of `Γ̂`.
    pub gamma_fallback_threshold: f64,
}

impl MethodConfig {
    pub fn new(r: usize, k: usize, s: usize) -> Self {
        Self {
            s,
            k,
            r,
            fp_tolerance: DEFAULT_FP_TOLERANCE,
            fp_max_iters: DEFAULT_FP_MAX_ITERS,
            warm_start: false,
            gamma_fallback_threshold: DEFAULT_GAMMA_FALLBACK_THRESHOLD,
        }
    }

    pub fn hbvm(k: usize, s: usize) -> Self {
        Self::new(k, k, s)
    }

    pub fn gauss(s: usize) -> Self {
        Self::new(s, s, s)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.fp_tolerance = tol;
        self
    }

    pub fn with_warm_start(mut self, warm: bool) -> Self {
        self.warm_start = warm;
        self
    }

    /// Checks the configuration for use with `nu` imposed invariants.
    pub fn validate(&self, nu: usize) -> Result<()> {
        if self.s == 0 {
            return Err(ElimError::Config("s must be positive".into()));
        }
        if self.k < self.s {
            return Err(ElimError::Config(format!(
                "k = {} must be at least s = {}",
                self.k, self.s
            )));
        }
        if nu > 0 && self.r < self.s {
            return Err(ElimError::Config(format!(
                "r = {} must be at least s = {}",
                self.r, self.s
            )));
        }
        if nu > 0 && self.s <= nu {
            return Err(ElimError::Config(format!(
                "s = {} must exceed the number of imposed invariants ν = {nu}",
                self.s
            )));
        }
        if !(self.fp_tolerance > 0.0) {
            return Err(ElimError::Config(
                "fixed-point tolerance must be positive".into(),
            ));
        }
        if self.fp_max_iters == 0 {
            return Err(ElimError::Config("fp_max_iters must be positive".into()));
        }
        if !(self.gamma_fallback_threshold > 0.0) {
            return Err(ElimError::Config(
                "fallback threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Converged state of one step.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    /// `γ̂_0, …, γ̂_{s−1}`.
    pub gamma: Vec<State>,
    /// `φ̂_0, …, φ̂_{s−1}` (2m×ν each; empty columns when `ν = 0`).
    pub phi: Vec<DMatrix<f64>>,
    pub eta: Vec<f64>,
    /// `α̂_{s−ν}, …, α̂_{s−1}`.
    pub alpha: DVector<f64>,
    /// `Γ̂` with its `h^{2(s−1−j)}` column scaling.
    pub gamma_matrix: DMatrix<f64>,
    /// `b̂ = Σ_j φ̂_jᵀ γ̂_j` (evaluated as minus the quadrature tail when `r = k`).
    pub rhs: DVector<f64>,
    pub iterations: usize,
    /// The last sweep fell back to `α̂ = 0`.
    pub gamma_fallback_used: bool,
    pub fallback_sweeps: usize,
    pub residual: f64,
}

/// One HBVM(k,s) step (`ν = 0`).
pub fn hbvm_step(
    problem: &HamiltonianProblem,
    config: &MethodConfig,
    y0: &State,
    h: f64,
) -> Result<(State, StepWorkspace)> {
    let kernel = StepKernel::new(config)?;
    engine::solve_step(&kernel, problem, None, config, y0, h, None)
}

/// One ELIM(r,k,s) step imposing every invariant of `invariants`.
pub fn elim_step(
    problem: &HamiltonianProblem,
    invariants: &InvariantSet,
    config: &MethodConfig,
    y0: &State,
    h: f64,
) -> Result<(State, StepWorkspace)> {
    if invariants.nu() == 0 {
        return Err(ElimError::Config(
            "ELIM needs at least one invariant".into(),
        ));
    }
    config.validate(invariants.nu())?;
    let kernel = StepKernel::new(config)?;
    engine::solve_step(&kernel, problem, Some(invariants), config, y0, h, None)
}

/// A one-step method for Hamiltonian problems.
pub trait Integrator: Send + Sync {
    /// Display label, e.g. `HBVM(12,3)`.
    fn label(&self) -> String;

    fn config(&self) -> &MethodConfig;

    fn problem(&self) -> &HamiltonianProblem;

    /// Invariants imposed by the method (not merely monitored).
    fn imposed_invariants(&self) -> Option<&InvariantSet> {
        None
    }

    /// Advances `y0` by `h`. `previous` is the workspace of the preceding
    /// step, used only when warm starting is enabled.
    fn step(
        &self,
        y0: &State,
        h: f64,
        previous: Option<&StepWorkspace>,
    ) -> Result<(State, StepWorkspace)>;
}

impl fmt::Debug for dyn Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrator")
            .field("label", &self.label())
            .field("config", self.config())
            .finish()
    }
}

/// HBVM(k,s): `k`-point quadrature, `s` coefficients, `η̂ ≡ 1`.
pub struct Hbvm {
    problem: Arc<HamiltonianProblem>,
    config: MethodConfig,
    kernel: StepKernel,
}

impl Hbvm {
    pub fn new(problem: Arc<HamiltonianProblem>, config: MethodConfig) -> Result<Self> {
        config.validate(0)?;
        let kernel = StepKernel::new(&config)?;
        Ok(Self {
            problem,
            config,
            kernel,
        })
    }
}

impl Integrator for Hbvm {
    fn label(&self) -> String {
        format!("HBVM({},{})", self.config.k, self.config.s)
    }

    fn config(&self) -> &MethodConfig {
        &self.config
    }

    fn problem(&self) -> &HamiltonianProblem {
        &self.problem
    }

    fn step(
        &self,
        y0: &State,
        h: f64,
        previous: Option<&StepWorkspace>,
    ) -> Result<(State, StepWorkspace)> {
        engine::solve_step(
            &self.kernel,
            &self.problem,
            None,
            &self.config,
            y0,
            h,
            previous,
        )
    }
}

/// The classical s-stage Gauss-Legendre collocation method, i.e. HBVM(s,s).
pub struct GaussLegendre(Hbvm);

impl GaussLegendre {
    pub fn new(problem: Arc<HamiltonianProblem>, mut config: MethodConfig) -> Result<Self> {
        config.k = config.s;
        config.r = config.s;
        Ok(Self(Hbvm::new(problem, config)?))
    }
}

impl Integrator for GaussLegendre {
    fn label(&self) -> String {
        format!("GAUSS{}", self.0.config.s)
    }

    fn config(&self) -> &MethodConfig {
        self.0.config()
    }

    fn problem(&self) -> &HamiltonianProblem {
        self.0.problem()
    }

    fn step(
        &self,
        y0: &State,
        h: f64,
        previous: Option<&StepWorkspace>,
    ) -> Result<(State, StepWorkspace)> {
        self.0.step(y0, h, previous)
    }
}

/// ELIM(r,k,s): HBVM(k,s) with the last `ν` coefficients rescaled so that the
/// invariants are conserved (up to the `r`-point quadrature error).
pub struct Elim {
    problem: Arc<HamiltonianProblem>,
    invariants: Arc<InvariantSet>,
    config: MethodConfig,
    kernel: StepKernel,
}

impl Elim {
    pub fn new(
        problem: Arc<HamiltonianProblem>,
        invariants: Arc<InvariantSet>,
        config: MethodConfig,
    ) -> Result<Self> {
        if invariants.nu() == 0 {
            return Err(ElimError::Config(
                "ELIM needs at least one invariant".into(),
            ));
        }
        config.validate(invariants.nu())?;
        let kernel = StepKernel::new(&config)?;
        Ok(Self {
            problem,
            invariants,
            config,
            kernel,
        })
    }
}

impl Integrator for Elim {
    fn label(&self) -> String {
        let c = &self.config;
        if c.r == c.k {
            format!("EHBVM{}({},{})", self.invariants.nu(), c.k, c.s)
        } else {
            format!("ELIM{}({},{},{})", self.invariants.nu(), c.r, c.k, c.s)
        }
    }

    fn config(&self) -> &MethodConfig {
        &self.config
    }

    fn problem(&self) -> &HamiltonianProblem {
        &self.problem
    }

    fn imposed_invariants(&self) -> Option<&InvariantSet> {
        Some(&self.invariants)
    }

    fn step(
        &self,
        y0: &State,
        h: f64,
        previous: Option<&StepWorkspace>,
    ) -> Result<(State, StepWorkspace)> {
        engine::solve_step(
            &self.kernel,
            &self.problem,
            Some(&self.invariants),
            &self.config,
            y0,
            h,
            previous,
        )
    }
}

/// Method name plus its sizes and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub config: MethodConfig,
}

impl MethodSpec {
    pub fn new(name: &str, config: MethodConfig) -> Self {
        Self {
            name: name.to_ascii_lowercase(),
            config,
        }
    }
}

/// Builds an [`Integrator`] from a configuration.
pub trait MethodFactory: Send + Sync {
    /// Normalises the user-supplied sizes (e.g. Gauss forces `k = r = s`).
    fn normalize(&self, config: MethodConfig) -> MethodConfig {
        config
    }

    /// Whether the method imposes the invariants it is given.
    fn imposes_invariants(&self) -> bool {
        false
    }

    fn build(
        &self,
        problem: Arc<HamiltonianProblem>,
        invariants: Option<Arc<InvariantSet>>,
        config: MethodConfig,
    ) -> Result<Box<dyn Integrator>>;
}

struct GaussFactory;

impl MethodFactory for GaussFactory {
    fn normalize(&self, mut config: MethodConfig) -> MethodConfig {
        config.k = config.s;
        config.r = config.s;
        config
    }

    fn build(
        &self,
        problem: Arc<HamiltonianProblem>,
        _invariants: Option<Arc<InvariantSet>>,
        config: MethodConfig,
    ) -> Result<Box<dyn Integrator>> {
        Ok(Box::new(GaussLegendre::new(
            problem,
            self.normalize(config),
        )?))
    }
}

struct HbvmFactory;

impl MethodFactory for HbvmFactory {
    fn build(
        &self,
        problem: Arc<HamiltonianProblem>,
        _invariants: Option<Arc<InvariantSet>>,
        config: MethodConfig,
    ) -> Result<Box<dyn Integrator>> {
        Ok(Box::new(Hbvm::new(problem, config)?))
    }
}

struct ElimFactory {
    r_equals_k: bool,
}

impl MethodFactory for ElimFactory {
    fn normalize(&self, mut config: MethodConfig) -> MethodConfig {
        if self.r_equals_k {
            config.r = config.k;
        }
        config
    }

    fn imposes_invariants(&self) -> bool {
        true
    }

    fn build(
        &self,
        problem: Arc<HamiltonianProblem>,
        invariants: Option<Arc<InvariantSet>>,
        config: MethodConfig,
    ) -> Result<Box<dyn Integrator>> {
        let invariants = invariants
            .ok_or_else(|| ElimError::Config("ELIM needs an invariant set to impose".into()))?;
        Ok(Box::new(Elim::new(
            problem,
            invariants,
            self.normalize(config),
        )?))
    }
}

/// Method factories by name.
pub struct MethodRegistry {
    factories: BTreeMap<String, Box<dyn MethodFactory>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: Box<dyn MethodFactory>) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn get(&self, name: &str) -> Result<&dyn MethodFactory> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|b| b.as_ref())
            .ok_or_else(|| ElimError::Unknown {
                kind: "method",
                name: name.into(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        spec: &MethodSpec,
        problem: Arc<HamiltonianProblem>,
        invariants: Option<Arc<InvariantSet>>,
    ) -> Result<Box<dyn Integrator>> {
        self.get(&spec.name)?
            .build(problem, invariants, spec.config)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("gauss", Box::new(GaussFactory));
        reg.register("hbvm", Box::new(HbvmFactory));
        reg.register("elim", Box::new(ElimFactory { r_equals_k: false }));
        reg.register("ehbvm", Box::new(ElimFactory { r_equals_k: true }));
        reg
    }
}
