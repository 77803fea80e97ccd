//! Post-processing of completed runs: observed orders, drift statistics,
//! `α̂` norms, iteration totals, and the per-iteration cost model comparing
//! LIM and ELIM sweeps.

use std::io::Write;

use serde::Serialize;

use crate::error::{ElimError, Result};
use crate::integrators::{integrate, Hbvm, MethodConfig, Trajectory};
use crate::problems::HamiltonianProblem;
use crate::State;

/// Slope (per unit time) separating bounded error from drift.
pub const DRIFT_SLOPE_THRESHOLD: f64 = 1e-12;

/// Formats with 16 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.15e}")
}

/// `log₂(e_i / e_{i+1})` for errors measured at successively halved steps.
pub fn estimate_orders(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(ElimError::InvalidArgument(
            "order estimation needs at least two errors".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(ElimError::InvalidArgument(format!(
            "errors must be positive and finite, got {e}"
        )));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// `ln(e_i / e_{i+1}) / ln(h_i / h_{i+1})` for arbitrary decreasing steps.
pub fn observed_orders(step_sizes: &[f64], errors: &[f64]) -> Result<Vec<f64>> {
    if step_sizes.len() != errors.len() {
        return Err(ElimError::InvalidArgument(
            "step sizes and errors differ in length".into(),
        ));
    }
    estimate_orders(errors)?;
    if step_sizes
        .windows(2)
        .any(|w| !(w[0].abs() > 0.0) || w[0] == w[1])
    {
        return Err(ElimError::InvalidArgument(
            "step sizes must be distinct and nonzero".into(),
        ));
    }
    Ok(step_sizes
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).abs().ln())
        .collect())
}

/// Max-norm distance between two states.
pub fn solution_error(a: &State, b: &State) -> f64 {
    (a - b).amax()
}

pub fn euclidean_error(a: &State, b: &State) -> f64 {
    (a - b).norm()
}

/// Terminal state at time `horizon`.
///
/// When `horizon` is an integer multiple of the problem's known period the
/// initial state is returned; otherwise HBVM(12,6) is run with the largest
/// step not exceeding `h_ref` that divides `horizon`.
pub fn reference_solution(problem: &HamiltonianProblem, h_ref: f64, horizon: f64) -> Result<State> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ElimError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if let Some(period) = problem.period {
        let cycles = horizon / period;
        if cycles.round() >= 1.0 && (cycles - cycles.round()).abs() <= 1e-9 * cycles {
            return Ok(problem.initial_state.clone());
        }
    }
    if !(h_ref > 0.0) {
        return Err(ElimError::InvalidArgument(format!(
            "reference step must be positive, got {h_ref}"
        )));
    }
    let n = (horizon / h_ref).ceil().max(1.0) as usize;
    let method = Hbvm::new(
        std::sync::Arc::new(problem.clone()),
        MethodConfig::hbvm(12, 6).with_tolerance(1e-15),
    )?;
    Ok(integrate(&method, None, horizon / n as f64, n)?
        .final_state()
        .clone())
}

/// Ratio of the cost of one LIM(r₁,k₁,s) sweep to one ELIM(r₂,k₂,s) sweep:
/// `(k₁ + (ν+1) r₁) / (k₂ + ν r₂)`.
pub fn cost_ratio(r1: usize, k1: usize, r2: usize, k2: usize, nu: usize) -> f64 {
    assert!(
        r1 > 0 && k1 > 0 && r2 > 0 && k2 > 0 && nu > 0,
        "cost_ratio arguments must be positive"
    );
    (k1 + (nu + 1) * r1) as f64 / (k2 + nu * r2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    pub fn new(label: impl Into<String>, step_sizes: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        if step_sizes.len() != errors.len() {
            return Err(ElimError::InvalidArgument(
                "step sizes and errors differ in length".into(),
            ));
        }
        let orders = if errors.len() >= 2 {
            observed_orders(&step_sizes, &errors)?
        } else if errors.iter().all(|e| *e > 0.0) {
            Vec::new()
        } else {
            return Err(ElimError::InvalidArgument("errors must be positive".into()));
        };
        Ok(Self {
            label: label.into(),
            step_sizes,
            errors,
            orders,
        })
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftClass {
    Bounded,
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub label: String,
    pub times: Vec<f64>,
    pub h_error: Vec<f64>,
    pub invariant_labels: Vec<String>,
    /// One series per invariant.
    pub invariant_errors: Vec<Vec<f64>>,
    pub alpha_max: f64,
    pub iteration_total: usize,
}

impl DriftReport {
    /// Series start with the exact `t = 0` sample.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let nu = traj.invariant_labels.len();
        let series = |f: &dyn Fn(&crate::integrators::StepRecord) -> f64| {
            std::iter::once(0.0)
                .chain(traj.records.iter().map(f))
                .collect::<Vec<f64>>()
        };
        Self {
            label: traj.label.clone(),
            times: series(&|r| r.t),
            h_error: series(&|r| r.h_error),
            invariant_labels: traj.invariant_labels.clone(),
            invariant_errors: (0..nu)
                .map(|i| series(&|r| r.invariant_errors[i]))
                .collect(),
            alpha_max: traj.alpha_max(),
            iteration_total: traj.total_iterations(),
        }
    }

    pub fn max_h_error(&self) -> f64 {
        self.h_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_invariant_error(&self, i: usize) -> f64 {
        self.invariant_errors[i].iter().copied().fold(0.0, f64::max)
    }

    pub fn h_slope(&self) -> f64 {
        regression_slope(&self.times, &self.h_error)
    }

    pub fn invariant_slope(&self, i: usize) -> f64 {
        regression_slope(&self.times, &self.invariant_errors[i])
    }

    pub fn classify(slope: f64) -> DriftClass {
        if slope.abs() <= DRIFT_SLOPE_THRESHOLD {
            DriftClass::Bounded
        } else {
            DriftClass::Drift
        }
    }

    /// Columns: `t,h_error,<label>_error…`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "h_error".to_string()];
        header.extend(self.invariant_labels.iter().map(|l| format!("{l}_error")));
        w.write_record(&header).map_err(ser)?;
        for n in 0..self.times.len() {
            let mut row = vec![fmt_f64(self.times[n]), fmt_f64(self.h_error[n])];
            row.extend(self.invariant_errors.iter().map(|s| fmt_f64(s[n])));
            w.write_record(&row).map_err(ser)?;
        }
        w.flush()
            .map_err(|e| ElimError::Serialization(e.to_string()))
    }
}

fn ser(e: csv::Error) -> ElimError {
    ElimError::Serialization(e.to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| ElimError::Serialization(e.to_string()))
}
