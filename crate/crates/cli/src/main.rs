use std::path::PathBuf;
use std::process::ExitCode;

use adherence_cli::{load_manifest, run_experiment, CliError, Experiment, ExperimentConfig, Format, RunOutcome};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adherence",
    version,
    about = "Run adherence-model experiments and emit CSV/JSON artifacts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of the K-driver simulator against the mean-field recursion
    SimulateMicro(Common),
    /// Mean-field trajectories for each control in the config
    MeanField(Common),
    /// Error e(t) = x̄(t) − x*(u) and its log-log slope
    ErrorDecay(Common),
    /// Grid scan of the fixed-point residual and uniqueness certificates
    EquilibriumScan(Common),
    /// Steady-state adherence/throughput frontier
    Frontier(Common),
    /// Largest constant control meeting the adherence floor
    OptimalU(Common),
    /// Run whichever experiment the config names
    Run(Common),
    /// Re-run the experiment recorded in a manifest
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_path = out.clone();
        }
        if let Some(format) = self.format {
            config.format = format;
        }
        Ok(config)
    }
}

fn dispatch(command: Command) -> Result<RunOutcome, CliError> {
    let (common, experiment) = match command {
        Command::SimulateMicro(c) => (c, Some(Experiment::MicroValidate)),
        Command::MeanField(c) => (c, Some(Experiment::MfTrajectory)),
        Command::ErrorDecay(c) => (c, Some(Experiment::ErrorDecay)),
        Command::EquilibriumScan(c) => (c, Some(Experiment::EquilibriumScan)),
        Command::Frontier(c) => (c, Some(Experiment::Frontier)),
        Command::OptimalU(c) => (c, Some(Experiment::OptimalU)),
        Command::Run(c) => (c, None),
        Command::Replay { manifest, out } => {
            let (mut config, experiment) = load_manifest(&manifest)?;
            if let Some(out) = out {
                config.output_path = out;
            }
            return run_experiment(&config, experiment);
        }
    };
    let config = common.resolve()?;
    let experiment = experiment.or(config.experiment).ok_or_else(|| CliError::InvalidField {
        field: "experiment".into(),
        reason: "must be set when using `run`".into(),
    })?;
    run_experiment(&config, experiment)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", outcome.output_dir.join(f).display());
            }
            if outcome.infeasible {
                eprintln!("INFEASIBLE: no control in [p, 1] meets the adherence floor");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
