use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgame_core::scenario::{configure_threads, run_scenario, Experiment, Scenario};

#[derive(Parser, Debug)]
#[command(name = "dgame", version, about = "Correlated equilibrium experiments for two-player differential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the scenario's master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Output directory (defaults to the scenario's, else out/<name>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment named in the scenario.
    Run(Common),
    /// Print the constant table.
    Constants(Common),
    /// Solve the parabolic system and store the lattice pair.
    SolvePde(Common),
    /// Statistical check of the value-pair condition.
    CheckConditionC(Common),
    /// Estimate equilibrium payoffs.
    Simulate(Common),
    /// Estimate the gain of unilateral deviations.
    Deviate(Common),
    /// Check the tracking inequalities on a rollout set.
    VerifyBounds(Common),
    /// Run the vanishing-noise family.
    Limit(Common),
    /// Test the mean path against the Nash payoff conditions.
    NashCheck(Common),
}

fn split(cmd: Command) -> (Option<Experiment>, Common) {
    match cmd {
        Command::Run(c) => (None, c),
        Command::Constants(c) => (Some(Experiment::Constants), c),
        Command::SolvePde(c) => (Some(Experiment::SolvePde), c),
        Command::CheckConditionC(c) => (Some(Experiment::CheckConditionC), c),
        Command::Simulate(c) => (Some(Experiment::Simulate), c),
        Command::Deviate(c) => (Some(Experiment::Deviate), c),
        Command::VerifyBounds(c) => (Some(Experiment::VerifyBounds), c),
        Command::Limit(c) => (Some(Experiment::Limit), c),
        Command::NashCheck(c) => (Some(Experiment::NashCheck), c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = split(cli.command);
    let mut scenario = match Scenario::load(&common.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    if let Some(e) = experiment {
        scenario.experiment = e;
    }
    if let Some(n) = common.threads {
        if let Err(e) = configure_threads(n) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let out = common.out.unwrap_or_else(|| scenario.output_dir());
    match run_scenario(&scenario, &out) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("wrote {} files to {}", outcome.files.len(), out.display());
            if outcome.passed() {
                println!("{}: all verdicts pass", scenario.experiment.name());
                ExitCode::SUCCESS
            } else {
                println!("{}: verdict failure", scenario.experiment.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
