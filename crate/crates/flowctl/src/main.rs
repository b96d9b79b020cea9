use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowctl_core::config::{ConfigError, RunConfig};
use flowctl_core::harness::{run_phase, run_sweep, summarize_dirs, HarnessError, Mode, SweepAxis};

#[derive(Parser)]
#[command(
    name = "flowctl",
    version,
    about = "Adaptive signal control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train or evaluate one controller and write its artifacts.
    Run {
        /// fixed, rl or rl-reroute
        #[arg(long)]
        mode: String,
        /// `key = value` overrides applied to the chosen profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Start from the full-size profile instead of the desk one.
        #[arg(long = "paper-scale", alias = "full-scale")]
        full_scale: bool,
    },
    /// Vary one learning parameter over its grid.
    Sweep {
        /// gamma, width or depth
        #[arg(long)]
        axis: String,
        #[arg(long, default_value = "rl")]
        mode: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long = "paper-scale", alias = "full-scale")]
        full_scale: bool,
    },
    /// Compare fixed, rl and rl-reroute run directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn profile(config: Option<&PathBuf>, full_scale: bool) -> Result<RunConfig, HarnessError> {
    let base = if full_scale {
        RunConfig::full_scale()
    } else {
        RunConfig::desk()
    };
    Ok(match config {
        Some(p) => RunConfig::load(p, base)?,
        None => base,
    })
}

fn bad_arg(key: &str, value: &str) -> HarnessError {
    HarnessError::Config(ConfigError::Value {
        key: key.into(),
        message: format!("unknown value `{value}`"),
    })
}

fn execute(cli: Cli) -> Result<String, HarnessError> {
    match cli.command {
        Command::Run {
            mode,
            config,
            seed,
            out,
            full_scale,
        } => {
            let mode = Mode::parse(&mode).ok_or_else(|| bad_arg("mode", &mode))?;
            let cfg = profile(config.as_ref(), full_scale)?;
            let result = run_phase(&cfg, mode, seed, &out)?;
            let last = result.metrics.last();
            Ok(format!(
                "{} run finished: {} episodes, last sim_time_s = {}, artifacts in {}\n",
                mode.as_str(),
                result.metrics.len(),
                last.map_or(0, |m| m.sim_time_s),
                out.display()
            ))
        }
        Command::Sweep {
            axis,
            mode,
            config,
            seeds,
            out,
            workers,
            full_scale,
        } => {
            let axis = SweepAxis::parse(&axis).ok_or_else(|| bad_arg("axis", &axis))?;
            let mode = Mode::parse(&mode).ok_or_else(|| bad_arg("mode", &mode))?;
            let cfg = profile(config.as_ref(), full_scale)?;
            let table = run_sweep(&cfg, axis, mode, &seeds, &out, workers)?;
            let mut s = String::new();
            for e in &table.ranking {
                s += &format!(
                    "{} {} = {}: mean final negative reward {:.1}{}\n",
                    e.rank,
                    axis.as_str(),
                    e.value,
                    e.mean_neg_reward,
                    if e.expected_best {
                        " (expected best)"
                    } else {
                        ""
                    }
                );
            }
            Ok(s)
        }
        Command::Summarize { dirs } => Ok(summarize_dirs(&dirs)?.report()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
