//! `dpllsim`: loop design, swept-sine measurement, time-domain runs and a
//! live monitor for the DPLL simulator.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 the
//! instrument finished but flagged its result (VNA saturation).

mod commands;
mod config;
mod manifest;
mod monitor;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpllsim_core::TestPoint;

use commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "dpllsim", version, about = "Digital phase-locked loop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print the derived loop filter gains and write controller Bode CSVs.
    Design {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Swept-sine measurement of the configured loop.
    Vna {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Close every loop before sweeping.
        #[arg(long, conflicts_with = "open")]
        closed: bool,
        /// Open every loop before sweeping.
        #[arg(long)]
        open: bool,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Time-domain run: traces, counter log and spectra.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Samples to run, overriding the config.
        #[arg(long)]
        duration: Option<u64>,
        /// Comma-separated test points, overriding the config.
        #[arg(long, value_delimiter = ',')]
        record: Option<Vec<TestPoint>>,
    },
    /// Run the simulation and serve the JSON-lines monitor.
    Serve {
        config: PathBuf,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        /// 0 picks a free port; the bound address is printed on stdout.
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Stop simulating after this many samples (default: run forever).
        #[arg(long)]
        duration: Option<u64>,
    },
}

fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Cmd::Design { config, out_dir } => commands::design(&config::load(&config)?, &out_dir),
        Cmd::Vna {
            config,
            out_dir,
            closed,
            open,
            points,
        } => {
            let mode = match (closed, open) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            commands::vna(&config::load(&config)?, &out_dir, mode, points)
        }
        Cmd::Simulate {
            config,
            out_dir,
            duration,
            record,
        } => commands::simulate(&config::load(&config)?, &out_dir, duration, record),
        Cmd::Serve {
            config,
            bind,
            port,
            duration,
        } => {
            let rc = config::load(&config)?;
            monitor::serve(rc.sim, SocketAddr::new(bind, port), duration)?;
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors; clap's own usage
            // status would collide with the instrument-warning code
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Warning) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
