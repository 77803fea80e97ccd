//! Energy-conserving Runge-Kutta methods for Hamiltonian systems `y' = J∇H(y)`.
//!
//! * [`polybasis`]: orthonormal shifted Legendre basis and Gauss-Legendre rules.
//! * [`tableau`]: Butcher matrices of HBVM(k,s) and the RK-type form of ELIM(r,k,s).
//! * [`problems`]: Hamiltonian problems, extra first integrals, built-in fixtures.
//! * [`integrators`]: the fixed-point steppers behind a common [`Integrator`] trait,
//!   selectable by name through a [`MethodRegistry`].
//! * [`analysis`]: order estimation, drift statistics and cost-ratio reporting.

pub mod analysis;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod polybasis;
pub mod problems;
pub mod tableau;

pub use error::{ElimError, Result};
pub use integrators::{
    integrate, Integrator, MethodConfig, MethodRegistry, MethodSpec, StepWorkspace, Trajectory,
};
pub use problems::{HamiltonianProblem, InvariantSet, ProblemRegistry};

/// State vectors `y = (q, p) ∈ ℝ^{2m}`.
pub type State = nalgebra::DVector<f64>;
