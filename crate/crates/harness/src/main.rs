use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use elim_core::problems::InvariantSelection;
use elim_harness::{parse_step, reproduce_paper, run_experiment, Experiment, ExperimentSpec};

/// Energy- and invariant-conserving integrators: experiment runner.
#[derive(Parser)]
#[command(name = "elim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the Butcher tableau of HBVM(k,s) as JSON.
    Tableau(SpecArgs),
    /// Terminal errors and observed orders over a list of step sizes.
    Convergence(SpecArgs),
    /// Per-step correction coefficients for elim/ehbvm.
    AlphaNorm(SpecArgs),
    /// Total fixed-point sweeps per step size.
    Iterations(SpecArgs),
    /// Energy and invariant errors at every step of one long run.
    Drift(SpecArgs),
    /// Run the full Kepler study into a directory.
    ReproducePaper {
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Fixed-point tolerance for every experiment.
        #[arg(long)]
        tol: Option<f64>,
    },
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct SpecArgs {
    /// JSON file with an experiment spec.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    eccentricity: Option<f64>,
    /// gauss, hbvm, elim or ehbvm.
    #[arg(long)]
    method: Option<String>,
    #[arg(short = 's')]
    s: Option<usize>,
    #[arg(short = 'k')]
    k: Option<usize>,
    #[arg(short = 'r')]
    r: Option<usize>,
    /// none, L1 or L1L2.
    #[arg(long)]
    invariants: Option<InvariantSelection>,
    /// Invariants to record; defaults to --invariants.
    #[arg(long)]
    monitor: Option<InvariantSelection>,
    /// Comma-separated step sizes, e.g. `pi/30,pi/60` or `0.1`.
    #[arg(long, value_delimiter = ',', value_parser = parse_step)]
    steps: Option<Vec<f64>>,
    /// Integration horizon, e.g. `20pi` or `1000`.
    #[arg(long, value_parser = parse_step)]
    horizon: Option<f64>,
    /// Fixed-point tolerance (default: $ELIM_FP_TOL, then 1e-14).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SpecArgs {
    fn into_spec(self, experiment: Experiment) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => ExperimentSpec::default(),
        };
        spec.experiment = experiment;
        if experiment == Experiment::Tableau && self.config.is_none() && self.out.is_none() {
            spec.output = PathBuf::from("tableau.json");
        }
        macro_rules! apply {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { spec.$target = v; })*
            };
        }
        apply!(problem => problem, method => method, s => s, k => k,
               invariants => invariants, steps => step_sizes, horizon => horizon, out => output);
        if self.eccentricity.is_some() {
            spec.eccentricity = self.eccentricity;
        }
        if self.r.is_some() {
            spec.r = self.r;
        }
        if self.monitor.is_some() {
            spec.monitor = self.monitor;
        }
        if self.tol.is_some() {
            spec.tol = self.tol;
        }
        Ok(spec)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (experiment, args) = match cli.command {
        Command::ReproducePaper { out, tol } => {
            let summary = reproduce_paper(&out, tol)?;
            let n = summary["experiments"].as_array().map_or(0, Vec::len);
            println!("wrote {n} experiments to {}", out.display());
            return Ok(());
        }
        Command::Tableau(a) => (Experiment::Tableau, a),
        Command::Convergence(a) => (Experiment::Convergence, a),
        Command::AlphaNorm(a) => (Experiment::AlphaNorm, a),
        Command::Iterations(a) => (Experiment::Iterations, a),
        Command::Drift(a) => (Experiment::Drift, a),
    };
    let spec = args.into_spec(experiment)?;
    let outcome = run_experiment(&spec)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}
