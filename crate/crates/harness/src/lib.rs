//! Experiment runner for `elim-core`.
//!
//! An [`ExperimentSpec`] names a problem, a method and a list of step sizes;
//! [`run_experiment`] validates it, runs the trajectories (in parallel over
//! step sizes) and writes a CSV file plus a `.meta.json` summary beside it.

pub mod reproduce;
pub mod run;
pub mod spec;

pub use reproduce::{reproduce_paper, study_specs, ITERATION_STUDY_TOLERANCE};
pub use run::{metadata_path, run_experiment, Outcome, RunSummary};
pub use spec::{parse_step, resolve_tolerance, Experiment, ExperimentSpec, Plan, TOLERANCE_ENV};
