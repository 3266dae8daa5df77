use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use zdsim_core::RunConfig;

#[derive(Parser)]
#[command(name = "zdsim", version, about = "Multipath MANET routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration to its horizon.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write a per-event protocol trace.
        #[arg(long)]
        trace: bool,
    },
    /// Run both protocols over a range of values of one numeric field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted field name, e.g. `mobility.v_max_mps`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 10)]
        seeds: u32,
    },
    /// Golden trace, reference-count suite, MAC sanity and invariants.
    Verify,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, trace } => {
            let cfg = RunConfig::load(&config)?;
            let dir = zdsim_cli::output_dir(&cfg);
            let r = zdsim_cli::run(&cfg, trace, &dir)?;
            println!(
                "{} seed {}: delivered {}/{} pdr {} delay {} s overhead {} -> {}",
                r.protocol,
                r.seed,
                r.delivered,
                r.offered,
                fmt(r.pdr),
                fmt(r.mean_delay_s),
                fmt(r.overhead_ratio),
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
        } => {
            let cfg = RunConfig::load(&config)?;
            let values = zdsim_cli::parse_values(&values)?;
            let s = zdsim_cli::sweep(&cfg, &axis, &values, seeds)?;
            let dir = zdsim_cli::output_dir(&cfg);
            s.write(&dir)?;
            println!(
                "{} runs, {} aggregate rows -> {}",
                s.runs.len(),
                s.rows.len(),
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let results = zdsim_cli::verify();
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}
