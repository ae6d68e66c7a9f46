mod commands;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Relay characteristics, consistency checks and auxiliary-signal design.
#[derive(Parser, Debug)]
#[command(name = "relaychar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Impedance characteristics per fault scenario, as CSV polygons and one SVG.
    Characteristic {
        file: PathBuf,
        /// Comma-separated scenario tags; defaults to the file's run.scenarios.
        #[arg(long)]
        scenarios: Option<String>,
        /// Zonogon relaxations instead of exact characteristics.
        #[arg(long)]
        relaxed: bool,
        /// Clip each characteristic by the line through the origin along z.
        #[arg(long)]
        cut: bool,
        /// Measurement file whose i_L replaces the nominal local current.
        #[arg(long)]
        measurement: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Consistency of one measurement with every fault scenario.
    Check { file: PathBuf, measurement: PathBuf },
    /// Separation flags over a lattice of uniform negative-sequence injections.
    Scan {
        file: PathBuf,
        /// re0:re1:n,im0:im1:n
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// three, lg-ll, all, or a list such as N-ag,ag-ab
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Small signal separating every pair, by alternating minimization.
    Optimize {
        file: PathBuf,
        #[arg(long)]
        pairs: Option<String>,
        /// Initial signal at every inverter, e.g. 1.6+0.6j.
        #[arg(long, allow_hyphen_values = true)]
        delta0: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Self-checks on a scenario file.
    Verify {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = match cli.command {
        Command::Characteristic { file, scenarios, relaxed, cut, measurement, out } => {
            commands::characteristic(&file, scenarios.as_deref(), relaxed, cut, measurement.as_deref(), &out)
        }
        Command::Check { file, measurement } => commands::check(&file, &measurement),
        Command::Scan { file, grid, pairs, out } => commands::scan(&file, grid.as_deref(), pairs.as_deref(), &out),
        Command::Optimize { file, pairs, delta0, max_iters, out } => {
            commands::optimize(&file, pairs.as_deref(), delta0.as_deref(), max_iters, &out)
        }
        Command::Verify { file, seed } => verify::run(&file, seed),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<relaychar::Error>().map(|e| e.exit_code()).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
