//! Experiment execution and output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use elim_core::analysis::{
    euclidean_error, fmt_f64, observed_orders, reference_solution, solution_error, DriftClass,
    DriftReport,
};
use elim_core::tableau::build_hbvm_tableau;
use elim_core::{integrate, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::spec::{Experiment, ExperimentSpec, Plan};

/// Files produced by one experiment plus the metadata that was written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub metadata: serde_json::Value,
}

/// Per-step-size summary stored in the metadata file.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub h: f64,
    pub steps: usize,
    pub iterations: usize,
    pub fallback_steps: usize,
    pub alpha_max: f64,
    pub max_h_error: f64,
    pub max_invariant_errors: Vec<f64>,
    /// Max-norm terminal error against the reference (convergence only).
    pub error: Option<f64>,
    pub error_euclidean: Option<f64>,
}

/// `<output>.meta.json`.
pub fn metadata_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    output.with_file_name(name)
}

/// Validates `spec`, runs it and writes its outputs. Nothing is written when
/// validation or any step fails.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    let plan = spec.plan()?;
    match spec.experiment {
        Experiment::Tableau => run_tableau(&plan),
        _ => run_trajectories(&plan),
    }
}

fn run_tableau(plan: &Plan) -> Result<Outcome> {
    let config = plan.method.config();
    let tableau = build_hbvm_tableau(config.k, config.s)?;
    let metadata = json!({
        "method": plan.method.label(),
        "k": config.k,
        "s": config.s,
        "tableau": tableau.to_json(),
    });
    let out = &plan.spec.output;
    write_atomic(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &metadata)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(Outcome {
        files: vec![out.clone()],
        metadata,
    })
}

fn run_trajectories(plan: &Plan) -> Result<Outcome> {
    let spec = &plan.spec;
    let runs: Vec<Trajectory> = spec
        .step_sizes
        .par_iter()
        .zip(plan.step_counts.par_iter())
        .map(|(&h, &n)| {
            integrate(plan.method.as_ref(), plan.monitor.as_deref(), h, n)
                .with_context(|| format!("{} with h = {h}", plan.method.label()))
        })
        .collect::<Result<_>>()?;

    let mut summaries: Vec<RunSummary> = runs
        .iter()
        .zip(&plan.step_counts)
        .map(|(t, &steps)| RunSummary {
            h: t.h,
            steps,
            iterations: t.total_iterations(),
            fallback_steps: t.fallback_steps(),
            alpha_max: t.alpha_max(),
            max_h_error: t.max_h_error(),
            max_invariant_errors: (0..t.invariant_labels.len())
                .map(|i| t.max_invariant_error(i))
                .collect(),
            error: None,
            error_euclidean: None,
        })
        .collect();

    let mut metadata = json!({
        "experiment": spec.experiment,
        "method": plan.method.label(),
        "problem": plan.problem.name,
        "config": plan.method.config(),
        "invariants": plan.monitor.as_ref().map(|m| m.labels.clone()).unwrap_or_default(),
        "horizon": spec.horizon,
        "tolerance": plan.tolerance,
    });

    let out = &spec.output;
    match spec.experiment {
        Experiment::Convergence => {
            let h_min = spec
                .step_sizes
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let reference = reference_solution(&plan.problem, h_min / 4.0, spec.horizon)?;
            for (s, t) in summaries.iter_mut().zip(&runs) {
                s.error = Some(solution_error(t.final_state(), &reference));
                s.error_euclidean = Some(euclidean_error(t.final_state(), &reference));
            }
            let errors: Vec<f64> = summaries.iter().filter_map(|s| s.error).collect();
            let orders = if errors.len() >= 2 && errors.iter().all(|e| *e > 0.0) {
                observed_orders(&spec.step_sizes, &errors)?
            } else {
                Vec::new()
            };
            metadata["orders"] = json!(orders);
            write_csv(out, |w| {
                w.write_record([
                    "h",
                    "steps",
                    "error",
                    "order",
                    "error_euclidean",
                    "iterations",
                    "alpha_max",
                ])?;
                for (i, s) in summaries.iter().enumerate() {
                    let order = match i.checked_sub(1).and_then(|j| orders.get(j)) {
                        Some(o) => fmt_f64(*o),
                        None => String::new(),
                    };
                    w.write_record([
                        fmt_f64(s.h),
                        s.steps.to_string(),
                        fmt_f64(s.error.unwrap_or(f64::NAN)),
                        order,
                        fmt_f64(s.error_euclidean.unwrap_or(f64::NAN)),
                        s.iterations.to_string(),
                        fmt_f64(s.alpha_max),
                    ])?;
                }
                Ok(())
            })?;
        }
        Experiment::AlphaNorm => {
            let maxima: Vec<f64> = summaries.iter().map(|s| s.alpha_max).collect();
            if maxima.len() >= 2 && maxima.iter().all(|a| *a > 0.0) {
                metadata["orders"] = json!(observed_orders(&spec.step_sizes, &maxima)?);
            }
            let config = plan.method.config();
            let nu = plan.method.imposed_invariants().map_or(0, |i| i.nu());
            write_csv(out, |w| {
                let mut header = vec![
                    "h".to_string(),
                    "t".into(),
                    "iterations".into(),
                    "fallback".into(),
                ];
                header.extend((config.s - nu..config.s).map(|j| format!("alpha_{j}")));
                w.write_record(&header)?;
                for t in &runs {
                    for r in &t.records {
                        let mut row = vec![
                            fmt_f64(t.h),
                            fmt_f64(r.t),
                            r.iterations.to_string(),
                            u8::from(r.fallback).to_string(),
                        ];
                        row.extend(r.alpha.iter().map(|a| fmt_f64(*a)));
                        w.write_record(&row)?;
                    }
                }
                Ok(())
            })?;
        }
        Experiment::Iterations => {
            write_csv(out, |w| {
                w.write_record([
                    "h",
                    "steps",
                    "iterations",
                    "mean_iterations",
                    "fallback_steps",
                ])?;
                for s in &summaries {
                    w.write_record([
                        fmt_f64(s.h),
                        s.steps.to_string(),
                        s.iterations.to_string(),
                        fmt_f64(s.iterations as f64 / s.steps as f64),
                        s.fallback_steps.to_string(),
                    ])?;
                }
                Ok(())
            })?;
        }
        Experiment::Drift => {
            let report = DriftReport::from_trajectory(&runs[0]);
            let slopes: Vec<f64> = (0..report.invariant_labels.len())
                .map(|i| report.invariant_slope(i))
                .collect();
            let class = |s: f64| match DriftReport::classify(s) {
                DriftClass::Bounded => "bounded",
                DriftClass::Drift => "drift",
            };
            metadata["h_slope"] = json!(report.h_slope());
            metadata["h_class"] = json!(class(report.h_slope()));
            metadata["invariant_slopes"] = json!(slopes);
            metadata["invariant_classes"] =
                json!(slopes.iter().map(|s| class(*s)).collect::<Vec<_>>());
            write_atomic(out, |w| Ok(report.write_csv(w)?))?;
        }
        Experiment::Tableau => unreachable!("handled by run_tableau"),
    }

    metadata["runs"] = json!(summaries);
    let meta_path = metadata_path(out);
    write_atomic(&meta_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &metadata)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(Outcome {
        files: vec![out.clone(), meta_path],
        metadata,
    })
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(&mut csv::Writer<&mut dyn Write>) -> Result<()>,
) -> Result<()> {
    write_atomic(path, |w| {
        let mut writer = csv::Writer::from_writer(w);
        body(&mut writer)?;
        writer.flush()?;
        Ok(())
    })
}

/// Writes into a temporary file beside `path` and renames it into place.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
