//! The full Kepler study: convergence tables, iteration totals, `α̂` norms
//! and long-time drift, written into one directory.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{ensure, Result};
use elim_core::problems::InvariantSelection;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::run::{run_experiment, Outcome};
use crate::spec::{Experiment, ExperimentSpec};

/// Tolerance for the iteration-count study unless one is given explicitly.
///
/// Counts depend on the stopping rule; at this level the relative totals of
/// the four methods are stable and close to the published magnitudes.
pub const ITERATION_STUDY_TOLERANCE: f64 = 3e-15;

/// `(file stem, method, invariants)` for the four methods compared throughout.
pub const VARIANTS: [(&str, &str, InvariantSelection); 4] = [
    ("gauss3", "gauss", InvariantSelection::None),
    ("hbvm_12_3", "hbvm", InvariantSelection::None),
    ("ehbvm1_12_3", "ehbvm", InvariantSelection::L1),
    ("ehbvm2_12_3", "ehbvm", InvariantSelection::L1L2),
];

fn kepler(experiment: Experiment, method: &str, inv: InvariantSelection) -> ExperimentSpec {
    ExperimentSpec {
        experiment,
        problem: "kepler".into(),
        eccentricity: Some(0.6),
        method: method.into(),
        s: 3,
        k: 12,
        invariants: inv,
        ..Default::default()
    }
}

/// Every experiment of the study, with outputs under `dir`.
pub fn study_specs(dir: &Path, tol: Option<f64>) -> Vec<ExperimentSpec> {
    let halvings: Vec<f64> = [30.0, 60.0, 120.0, 240.0, 480.0]
        .iter()
        .map(|d| PI / d)
        .collect();
    let mut specs = Vec::new();
    for (stem, method, inv) in VARIANTS {
        specs.push(ExperimentSpec {
            step_sizes: halvings.clone(),
            horizon: 20.0 * PI,
            tol,
            output: dir.join(format!("convergence_{stem}.csv")),
            ..kepler(Experiment::Convergence, method, inv)
        });
        specs.push(ExperimentSpec {
            step_sizes: vec![PI / 30.0],
            horizon: 20.0 * PI,
            tol: Some(tol.unwrap_or(ITERATION_STUDY_TOLERANCE)),
            output: dir.join(format!("iterations_{stem}.csv")),
            ..kepler(Experiment::Iterations, method, inv)
        });
        specs.push(ExperimentSpec {
            step_sizes: vec![0.1],
            horizon: 1000.0,
            tol,
            monitor: Some(InvariantSelection::L1L2),
            output: dir.join(format!("drift_{stem}.csv")),
            ..kepler(Experiment::Drift, method, inv)
        });
        if method == "ehbvm" {
            specs.push(ExperimentSpec {
                step_sizes: halvings.clone(),
                horizon: 20.0 * PI,
                tol,
                output: dir.join(format!("alpha_norm_{stem}.csv")),
                ..kepler(Experiment::AlphaNorm, method, inv)
            });
        }
    }
    specs.push(ExperimentSpec {
        experiment: Experiment::Tableau,
        s: 2,
        k: 2,
        output: dir.join("tableau_2_2.json"),
        ..Default::default()
    });
    specs
}

/// Runs the whole study. All specs are validated before anything runs.
pub fn reproduce_paper(dir: &Path, tol: Option<f64>) -> Result<Value> {
    ensure!(
        dir.is_dir(),
        "output directory {} does not exist",
        dir.display()
    );
    let specs = study_specs(dir, tol);
    for spec in &specs {
        spec.plan()?;
    }
    let outcomes: Vec<Outcome> = specs
        .par_iter()
        .map(run_experiment)
        .collect::<Result<_>>()?;

    let experiments: Vec<Value> = specs
        .iter()
        .zip(&outcomes)
        .map(|(spec, outcome)| {
            json!({
                "output": spec.output.file_name().map(|f| f.to_string_lossy().into_owned()),
                "metadata": outcome.metadata,
            })
        })
        .collect();
    let summary = json!({ "experiments": experiments });
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
