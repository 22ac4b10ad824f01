use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use laguerre_sysid::cli::{self, Output};

#[derive(Parser)]
#[command(name = "laguerre-sysid", version, about = "Block-oriented nonlinear system identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the reference plant and write a dataset CSV.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Identify a block-oriented model from a dataset and write a model file.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (`k,u,y`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the noise-robustness sweep; writes the CSV grid and a JSON report next to it.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Include per-cell wall times in the JSON report.
        #[arg(long)]
        timings: bool,
    },
    /// Simulate a model file on a dataset and report the MSE.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write per-sample `k,y,yhat,residual` rows here.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
}

fn run(command: Command) -> laguerre_sysid::Result<Output> {
    match command {
        Command::Generate { common } => {
            let cfg = cli::load_config(common.config.as_deref(), common.seed)?;
            cli::cmd_generate(&cfg, &common.out)
        }
        Command::Identify { common, data } => {
            let cfg = cli::load_config(common.config.as_deref(), common.seed)?;
            cli::cmd_identify(&cfg, &data, &common.out)
        }
        Command::Sweep { common, timings } => {
            let cfg = cli::load_config(common.config.as_deref(), common.seed)?;
            cli::cmd_sweep(&cfg, &common.out, timings)
        }
        Command::Validate { model, data, residuals } => cli::cmd_validate(&model, &data, residuals.as_deref()),
    }
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { cli::EXIT_CONFIG } else { cli::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(args.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            eprint!("{}", out.stderr);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
