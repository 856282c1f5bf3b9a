use std::path::PathBuf;
use std::process::ExitCode;

use bregman_vi::experiment::{run_experiment, ConfigFile, Experiment, ExperimentOutcome, ExperimentSpec, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bregvi", version, about = "Bregman-form VI experiments and numerical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Negative ELBO and the monotonicity bound over a 1-d interval
    Landscape(Common),
    /// Ray-wise spectral envelope and quadratic sandwich bounds
    Envelope(Common),
    /// GD and NGD trajectories on a 2-d model, plus a contour lattice
    Trajectory(Common),
    /// GD vs NGD across condition numbers on 20-d quadratics
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Put all of the initial error on the extreme eigenvectors
        #[arg(long)]
        worst_case: bool,
    },
    /// Run every invariant check and report as JSON
    Verify {
        #[command(flatten)]
        common: Common,
        /// Perturb the analytic gradient so the gradient check must fail
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Envelope grid size (odd)
    #[arg(long)]
    grid: Option<usize>,
    /// Simpson panel count (even)
    #[arg(long)]
    panels: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once ‖φ − φ*‖ falls to this distance
    #[arg(long)]
    tol: Option<f64>,
    /// Accept GD steps at or above the stability limit 2/β
    #[arg(long)]
    allow_divergent: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            grid: self.grid,
            panels: self.panels,
            max_iters: self.max_iters,
            tol: self.tol,
            allow_divergent: self.allow_divergent,
            ..Default::default()
        }
    }
}

fn execute(cli: Cli) -> ExperimentOutcome<usize> {
    let (name, common, mut ov) = match &cli.command {
        Command::Landscape(c) => (Experiment::Landscape, c, c.overrides()),
        Command::Envelope(c) => (Experiment::Envelope, c, c.overrides()),
        Command::Trajectory(c) => (Experiment::Trajectory, c, c.overrides()),
        Command::Sweep { common, worst_case } => {
            let mut ov = common.overrides();
            ov.worst_case = *worst_case;
            (Experiment::Sweep, common, ov)
        }
        Command::Verify { common, inject_fault } => {
            let mut ov = common.overrides();
            ov.inject_fault = *inject_fault;
            (Experiment::Verify, common, ov)
        }
    };
    let config = match &common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    ov.out = ov.out.take().or_else(|| config.out.clone());
    let spec = ExperimentSpec::resolve(name, config, &ov)?;
    let result = run_experiment(&spec)?;
    result.write(&spec.out)?;
    if name == Experiment::Verify {
        print!("{}", result.summary_json()?);
    }
    eprintln!(
        "{}: wrote {} csv file(s) and summary.json to {}; violations: {}",
        name.as_str(),
        result.csv.len(),
        spec.out.display(),
        result.violations
    );
    Ok(result.violations)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
