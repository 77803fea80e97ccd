use super::{Integrator, StepWorkspace};
use crate::error::{ElimError, Result};
use crate::problems::InvariantSet;
use crate::State;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: State,
    /// `|H(y_n) − H(y₀)|`.
    pub h_error: f64,
    /// `|L_i(y_n) − L_i(y₀)|` for every monitored invariant.
    pub invariant_errors: Vec<f64>,
    pub iterations: usize,
    /// `α̂_n`; empty for methods without imposed invariants.
    pub alpha: Vec<f64>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub h: f64,
    pub initial_state: State,
    pub invariant_labels: Vec<String>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.records
            .last()
            .map_or(&self.initial_state, |r| &r.state)
    }

    pub fn total_iterations(&self) -> usize {
        self.records.iter().map(|r| r.iterations).sum()
    }

    /// `max_n ‖α̂_n‖_∞` (zero when nothing is imposed).
    pub fn alpha_max(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.alpha.iter())
            .fold(0.0, |acc, a| acc.max(a.abs()))
    }

    pub fn max_h_error(&self) -> f64 {
        self.records.iter().fold(0.0, |acc, r| acc.max(r.h_error))
    }

    pub fn max_invariant_error(&self, i: usize) -> f64 {
        self.records
            .iter()
            .fold(0.0, |acc, r| acc.max(r.invariant_errors[i]))
    }

    pub fn fallback_steps(&self) -> usize {
        self.records.iter().filter(|r| r.fallback).count()
    }
}

/// Takes `n_steps` steps of size `h` from the problem's initial state.
///
/// Invariant errors are recorded for `monitor`, or for the method's imposed
/// invariants when `monitor` is `None`.
pub fn integrate(
    method: &dyn Integrator,
    monitor: Option<&InvariantSet>,
    h: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(ElimError::InvalidArgument(
            "n_steps must be at least 1".into(),
        ));
    }
    if !(h.is_finite() && h != 0.0) {
        return Err(ElimError::InvalidArgument(format!("invalid step size {h}")));
    }
    let problem = method.problem();
    let monitor = monitor.or(method.imposed_invariants());
    let y0 = problem.initial_state.clone();
    let h0 = problem.energy(&y0);
    let l0 = monitor.map(|m| m.eval(&y0));

    let mut records = Vec::with_capacity(n_steps);
    let mut y = y0.clone();
    let mut previous: Option<StepWorkspace> = None;
    for n in 1..=n_steps {
        let (next, ws) = method
            .step(&y, h, previous.as_ref())
            .map_err(|e| ElimError::Step {
                step: n,
                source: Box::new(e),
            })?;
        let invariant_errors = match (monitor, &l0) {
            (Some(m), Some(l0)) => (m.eval(&next) - l0).iter().map(|d| d.abs()).collect(),
            _ => Vec::new(),
        };
        records.push(StepRecord {
            t: n as f64 * h,
            h_error: (problem.energy(&next) - h0).abs(),
            invariant_errors,
            iterations: ws.iterations,
            alpha: ws.alpha.iter().copied().collect(),
            fallback: ws.gamma_fallback_used,
            state: next.clone(),
        });
        y = next;
        previous = Some(ws);
    }
    Ok(Trajectory {
        label: method.label(),
        h,
        initial_state: y0,
        invariant_labels: monitor.map(|m| m.labels.clone()).unwrap_or_default(),
        records,
    })
}
