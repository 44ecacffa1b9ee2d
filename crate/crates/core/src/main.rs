use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphflow::cli::{cmd_check, cmd_run, cmd_sweep, configure_threads, SweepAxis};

#[derive(Parser)]
#[command(name = "graphflow", version, about = "Graphical mean curvature flow of maps between surfaces")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write series.csv and summary.json.
    Run { config: PathBuf },
    /// Cross-check the initial state against the reference computations.
    Check { config: PathBuf },
    /// Repeat a run over several values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    let code = match args.command {
        Command::Run { config } => cmd_run(&config),
        Command::Check { config } => cmd_check(&config),
        Command::Sweep { config, axis, values } => cmd_sweep(&config, axis, &values),
    };
    ExitCode::from(code as u8)
}
