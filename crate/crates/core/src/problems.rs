//! Hamiltonian problems `y' = J∇H(y)`, additional first integrals, and the
//! built-in fixtures (Kepler, polynomial oscillators).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ElimError, Result};
use crate::State;

pub type ScalarFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&State) -> State + Send + Sync>;
pub type InvariantFn = Arc<dyn Fn(&State) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&State) -> DMatrix<f64> + Send + Sync>;

/// `J v` for `J = [[0, I], [−I, 0]]`.
pub fn apply_j(v: &State) -> State {
    let m = v.len() / 2;
    State::from_fn(v.len(), |i, _| if i < m { v[i + m] } else { -v[i - m] })
}

#[derive(Clone)]
pub struct HamiltonianProblem {
    pub name: String,
    /// Half dimension; states live in `ℝ^{2m}`.
    pub m: usize,
    pub hamiltonian: ScalarFn,
    pub grad_h: VectorFn,
    pub initial_state: State,
    /// Exact period of the flow through `initial_state`, when known.
    pub period: Option<f64>,
}

impl fmt::Debug for HamiltonianProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianProblem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("initial_state", &self.initial_state.as_slice())
            .field("period", &self.period)
            .finish()
    }
}

impl HamiltonianProblem {
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn energy(&self, y: &State) -> f64 {
        (self.hamiltonian)(y)
    }

    pub fn gradient(&self, y: &State) -> State {
        (self.grad_h)(y)
    }

    /// `f(y) = J∇H(y)`.
    pub fn vector_field(&self, y: &State) -> State {
        apply_j(&self.gradient(y))
    }
}

/// `ν` first integrals `L: ℝ^{2m} → ℝ^ν` besides the Hamiltonian.
#[derive(Clone)]
pub struct InvariantSet {
    pub labels: Vec<String>,
    pub values: InvariantFn,
    /// 2m×ν, column `i` is `∇L_i`.
    pub gradients: JacobianFn,
}

impl fmt::Debug for InvariantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvariantSet")
            .field("labels", &self.labels)
            .finish()
    }
}

impl InvariantSet {
    pub fn nu(&self) -> usize {
        self.labels.len()
    }

    pub fn eval(&self, y: &State) -> DVector<f64> {
        (self.values)(y)
    }

    pub fn jacobian_t(&self, y: &State) -> DMatrix<f64> {
        (self.gradients)(y)
    }
}

pub fn kepler_problem(eccentricity: f64) -> Result<HamiltonianProblem> {
    if !(0.0..1.0).contains(&eccentricity) {
        return Err(ElimError::InvalidArgument(format!(
            "eccentricity must lie in [0, 1), got {eccentricity}"
        )));
    }
    let e = eccentricity;
    let initial_state = State::from_vec(vec![1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()]);
    Ok(HamiltonianProblem {
        name: format!("kepler(e={e})"),
        m: 2,
        hamiltonian: Arc::new(|y: &State| {
            let r = y[0].hypot(y[1]);
            0.5 * (y[2] * y[2] + y[3] * y[3]) - 1.0 / r
        }),
        grad_h: Arc::new(|y: &State| {
            let r = y[0].hypot(y[1]);
            let r3 = r * r * r;
            State::from_vec(vec![y[0] / r3, y[1] / r3, y[2], y[3]])
        }),
        initial_state,
        period: Some(2.0 * std::f64::consts::PI),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeplerInvariants {
    AngularMomentum,
    AngularMomentumAndLrl,
}

/// Angular momentum `L₁ = q₁p₂ − q₂p₁` and the LRL component
/// `L₂ = −p₁L₁ − q₂/‖q‖` (the second entry of `p × L − q/‖q‖`).
pub fn kepler_invariants(which: KeplerInvariants) -> InvariantSet {
    fn l1(y: &State) -> f64 {
        y[0] * y[3] - y[1] * y[2]
    }
    fn grad_l1(y: &State) -> [f64; 4] {
        [y[3], -y[2], -y[1], y[0]]
    }
    fn l2(y: &State) -> f64 {
        let r = y[0].hypot(y[1]);
        -y[2] * l1(y) - y[1] / r
    }
    fn grad_l2(y: &State) -> [f64; 4] {
        let (q1, q2, p1, p2) = (y[0], y[1], y[2], y[3]);
        let r = q1.hypot(q2);
        let r3 = r * r * r;
        [
            -p1 * p2 + q1 * q2 / r3,
            p1 * p1 - 1.0 / r + q2 * q2 / r3,
            -l1(y) + p1 * q2,
            -p1 * q1,
        ]
    }

    match which {
        KeplerInvariants::AngularMomentum => InvariantSet {
            labels: vec!["L1".into()],
            values: Arc::new(|y: &State| DVector::from_element(1, l1(y))),
            gradients: Arc::new(|y: &State| DMatrix::from_column_slice(4, 1, &grad_l1(y))),
        },
        KeplerInvariants::AngularMomentumAndLrl => InvariantSet {
            labels: vec!["L1".into(), "L2".into()],
            values: Arc::new(|y: &State| DVector::from_vec(vec![l1(y), l2(y)])),
            gradients: Arc::new(|y: &State| {
                let mut g = DMatrix::zeros(4, 2);
                g.set_column(0, &DVector::from_column_slice(&grad_l1(y)));
                g.set_column(1, &DVector::from_column_slice(&grad_l2(y)));
                g
            }),
        },
    }
}

/// `H(q, p) = p²/2 + q^d/d` with `y₀ = (1, 0)`.
pub fn polynomial_oscillator(degree: u32) -> Result<HamiltonianProblem> {
    if degree == 0 || degree % 2 == 1 {
        return Err(ElimError::InvalidArgument(format!(
            "oscillator degree must be even and positive, got {degree}"
        )));
    }
    let d = degree as i32;
    let df = degree as f64;
    let name = match degree {
        2 => "harmonic".to_string(),
        4 => "quartic".to_string(),
        6 => "sextic".to_string(),
        8 => "octic".to_string(),
        _ => format!("oscillator(d={degree})"),
    };
    Ok(HamiltonianProblem {
        name,
        m: 1,
        hamiltonian: Arc::new(move |y: &State| 0.5 * y[1] * y[1] + y[0].powi(d) / df),
        grad_h: Arc::new(move |y: &State| State::from_vec(vec![y[0].powi(d - 1), y[1]])),
        initial_state: State::from_vec(vec![1.0, 0.0]),
        period: if degree == 2 {
            Some(2.0 * std::f64::consts::PI)
        } else {
            None
        },
    })
}

/// Which first integrals to impose besides `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InvariantSelection {
    #[default]
    #[serde(rename = "none")]
    None,
    L1,
    L1L2,
}

impl FromStr for InvariantSelection {
    type Err = ElimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "l1" => Ok(Self::L1),
            "l1l2" => Ok(Self::L1L2),
            _ => Err(ElimError::Unknown {
                kind: "invariant selection",
                name: s.into(),
            }),
        }
    }
}

impl fmt::Display for InvariantSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::L1 => "L1",
            Self::L1L2 => "L1L2",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemParams {
    pub eccentricity: Option<f64>,
}

/// A named problem family that can be instantiated from CLI parameters.
pub trait ProblemFactory: Send + Sync {
    fn build(&self, params: &ProblemParams) -> Result<HamiltonianProblem>;

    /// The invariant set for `selection`; `Ok(None)` for [`InvariantSelection::None`].
    fn invariants(&self, selection: InvariantSelection) -> Result<Option<InvariantSet>>;
}

struct KeplerFactory;

impl ProblemFactory for KeplerFactory {
    fn build(&self, params: &ProblemParams) -> Result<HamiltonianProblem> {
        kepler_problem(params.eccentricity.unwrap_or(0.6))
    }

    fn invariants(&self, selection: InvariantSelection) -> Result<Option<InvariantSet>> {
        Ok(match selection {
            InvariantSelection::None => None,
            InvariantSelection::L1 => Some(kepler_invariants(KeplerInvariants::AngularMomentum)),
            InvariantSelection::L1L2 => {
                Some(kepler_invariants(KeplerInvariants::AngularMomentumAndLrl))
            }
        })
    }
}

struct OscillatorFactory(u32);

impl ProblemFactory for OscillatorFactory {
    fn build(&self, _params: &ProblemParams) -> Result<HamiltonianProblem> {
        polynomial_oscillator(self.0)
    }

    fn invariants(&self, selection: InvariantSelection) -> Result<Option<InvariantSet>> {
        match selection {
            InvariantSelection::None => Ok(None),
            other => Err(ElimError::Config(format!(
                "the degree-{} oscillator has no invariant set `{other}`",
                self.0
            ))),
        }
    }
}

/// Problem families by name.
pub struct ProblemRegistry {
    factories: BTreeMap<String, Box<dyn ProblemFactory>>,
}

impl ProblemRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: Box<dyn ProblemFactory>) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ProblemFactory> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|b| b.as_ref())
            .ok_or_else(|| ElimError::Unknown {
                kind: "problem",
                name: name.into(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("kepler", Box::new(KeplerFactory));
        reg.register("harmonic", Box::new(OscillatorFactory(2)));
        reg.register("quartic", Box::new(OscillatorFactory(4)));
        reg.register("sextic", Box::new(OscillatorFactory(6)));
        reg.register("octic", Box::new(OscillatorFactory(8)));
        reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kepler_state() -> impl Strategy<Value = State> {
        (
            0.3f64..2.0,
            0.0f64..std::f64::consts::TAU,
            -1.5f64..1.5,
            -1.5f64..1.5,
        )
            .prop_map(|(r, th, p1, p2)| State::from_vec(vec![r * th.cos(), r * th.sin(), p1, p2]))
    }

    fn fd_gradient(f: impl Fn(&State) -> f64, y: &State) -> State {
        let step = 1e-6;
        State::from_fn(y.len(), |i, _| {
            let mut a = y.clone();
            let mut b = y.clone();
            a[i] += step;
            b[i] -= step;
            (f(&a) - f(&b)) / (2.0 * step)
        })
    }

    fn assert_close_rel(a: &State, b: &State, tol: f64) {
        let scale = 1.0 + b.amax();
        assert!((a - b).amax() <= tol * scale, "{a} vs {b}");
    }

    #[test]
    fn kepler_initial_state_and_energy() {
        let p = kepler_problem(0.6).unwrap();
        assert_eq!(p.initial_state.as_slice(), &[0.4, 0.0, 0.0, 2.0]);
        assert!((p.energy(&p.initial_state) + 0.5).abs() < 1e-15);
        assert!(kepler_problem(1.0).is_err());
        assert!(kepler_problem(-0.1).is_err());
        let c = kepler_problem(0.0).unwrap();
        assert_eq!(c.initial_state.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn kepler_invariant_values() {
        let y = kepler_problem(0.6).unwrap().initial_state;
        let l = kepler_invariants(KeplerInvariants::AngularMomentumAndLrl).eval(&y);
        assert!((l[0] - 0.8).abs() < 1e-15);
        assert_eq!(l[1], 0.0);
        let one = kepler_invariants(KeplerInvariants::AngularMomentum);
        assert_eq!(one.nu(), 1);
    }

    #[test]
    fn oscillator_values() {
        let q = polynomial_oscillator(4).unwrap();
        assert_eq!(q.energy(&q.initial_state), 0.25);
        let s = polynomial_oscillator(6).unwrap();
        let y = State::from_vec(vec![0.5, 0.2]);
        assert!((s.energy(&y) - (0.02 + 0.5f64.powi(6) / 6.0)).abs() < 1e-16);
        assert!(polynomial_oscillator(3).is_err());
        assert!(polynomial_oscillator(0).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = ProblemRegistry::default();
        let k = reg.get("Kepler").unwrap();
        let p = k
            .build(&ProblemParams {
                eccentricity: Some(0.5),
            })
            .unwrap();
        assert_eq!(p.m, 2);
        assert_eq!(
            k.invariants(InvariantSelection::L1L2)
                .unwrap()
                .unwrap()
                .nu(),
            2
        );
        assert!(reg
            .get("quartic")
            .unwrap()
            .invariants(InvariantSelection::L1)
            .is_err());
        assert!(matches!(reg.get("lorenz"), Err(ElimError::Unknown { .. })));
        assert_eq!(
            "l1L2".parse::<InvariantSelection>().unwrap(),
            InvariantSelection::L1L2
        );
        assert!("L3".parse::<InvariantSelection>().is_err());
    }

    proptest! {
        #[test]
        fn kepler_gradients_match_finite_differences(y in kepler_state()) {
            let p = kepler_problem(0.6).unwrap();
            assert_close_rel(&p.gradient(&y), &fd_gradient(|z| p.energy(z), &y), 1e-6);
            let inv = kepler_invariants(KeplerInvariants::AngularMomentumAndLrl);
            let jac = inv.jacobian_t(&y);
            for i in 0..2 {
                let fd = fd_gradient(|z| inv.eval(z)[i], &y);
                assert_close_rel(&jac.column(i).into_owned(), &fd, 1e-6);
            }
        }

        #[test]
        fn kepler_invariants_are_first_integrals(y in kepler_state()) {
            let p = kepler_problem(0.6).unwrap();
            let f = p.vector_field(&y);
            prop_assert!(p.gradient(&y).dot(&f).abs() <= 1e-12 * (1.0 + f.norm_squared()));
            let inv = kepler_invariants(KeplerInvariants::AngularMomentumAndLrl);
            let r = inv.jacobian_t(&y).transpose() * &f;
            prop_assert!(r.amax() <= 1e-11, "{}", r);
        }

        #[test]
        fn oscillator_gradients(deg in prop::sample::select(vec![2u32, 4, 6, 8]),
                                q in -1.5f64..1.5, pm in -1.5f64..1.5) {
            let p = polynomial_oscillator(deg).unwrap();
            let y = State::from_vec(vec![q, pm]);
            assert_close_rel(&p.gradient(&y), &fd_gradient(|z| p.energy(z), &y), 1e-6);
            prop_assert!(p.gradient(&y).dot(&p.vector_field(&y)).abs() <= 1e-12);
        }
    }
}
