use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use syncnet::commands::{cmd_batch, cmd_design, cmd_paper_example, cmd_simulate, cmd_verify, GainChoice};
use syncnet::config::Overrides;
use syncnet::CliError;

#[derive(Parser)]
#[command(name = "syncnet", version, about = "Scale-free synchronization of discrete-time multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Number of steps to simulate.
    #[arg(long)]
    horizon: Option<usize>,
    /// Seed for random initial conditions.
    #[arg(long)]
    seed: Option<u64>,
    /// Settling tolerance for the summary.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Simulate even if the graph violates the protocol's structural condition.
    #[arg(long)]
    allow_unverified: bool,
}

impl RunOpts {
    fn overrides(&self) -> Overrides {
        Overrides { horizon: self.horizon, seed: self.seed, tol: self.tol, allow_unverified: self.allow_unverified }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Gains {
    Printed,
    Designed,
}

#[derive(Subcommand)]
enum Command {
    /// Design K, H (and optionally pre-compensators) for agent files.
    Design {
        agents: Vec<PathBuf>,
        /// Also design a pre-compensator to the nq-delay target.
        #[arg(long)]
        nq: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate an experiment: trace CSV, summary and plot script.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Certify an experiment and cross-check the simulator.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Reproduce the worked example on the bundled cases.
    PaperExample {
        #[arg(long, value_enum, default_value = "printed")]
        gains: Gains,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Simulate and verify several experiments in parallel.
    Batch {
        configs: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
}

fn dispatch(cli: Cli) -> Result<(String, u8), CliError> {
    let ok = |s: String| Ok((s, 0));
    match cli.command {
        Command::Design { agents, nq, out } => ok(cmd_design(&agents, nq, &out)?),
        Command::Simulate { config, opts } => ok(cmd_simulate(&config, &opts.overrides(), &opts.out)?),
        Command::Verify { config, opts } => ok(cmd_verify(&config, &opts.overrides(), &opts.out)?),
        Command::PaperExample { gains, opts } => {
            let g = match gains {
                Gains::Printed => GainChoice::Printed,
                Gains::Designed => GainChoice::Designed,
            };
            ok(cmd_paper_example(g, &opts.overrides(), &opts.out)?)
        }
        Command::Batch { configs, opts } => cmd_batch(&configs, &opts.overrides(), &opts.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok((text, code)) => {
            print!("{text}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
