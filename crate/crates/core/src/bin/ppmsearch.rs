use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppmsearch::cli::{self, Command, Overrides};
use ppmsearch::Method;

#[derive(Parser)]
#[command(
    name = "ppmsearch",
    version,
    about = "Probability-map guided wide-area object search simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file and list every problem.
    Validate(Common),
    /// Run one traced trial.
    Trial(Common),
    /// Recall against budget for every method.
    Curve(Common),
    /// Recall against the share of high-probability area.
    Sweep(Common),
    /// Full pipeline with and without the probability map per detector preset.
    Ablation(Common),
    /// Final center deviation with voting on and off.
    Deviation(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, env = cli::OUT_ENV)]
    out: Option<PathBuf>,
    /// Method of the `trial` subcommand.
    #[arg(long)]
    method: Option<Method>,
    /// Gaze points per stage of the `trial` subcommand.
    #[arg(long)]
    budget: Option<u64>,
    /// Override any config key, e.g. `engine.iterations=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Cli::parse();
    let (cmd, common) = match args.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Trial(c) => (Command::Trial, c),
        Cmd::Curve(c) => (Command::Curve, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Ablation(c) => (Command::Ablation, c),
        Cmd::Deviation(c) => (Command::Deviation, c),
    };
    let ov = Overrides {
        seed: common.seed,
        jobs: common.jobs,
        out: common.out,
        method: common.method,
        budget: common.budget,
        set: common.set,
    };
    let mut stdout = std::io::stdout();
    match cli::run(cmd, common.config.as_deref(), &ov, &mut stdout) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
