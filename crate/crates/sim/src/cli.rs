//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::runner::{self, Failure};
use crate::scenario::{Scenario, SCHEMA};

#[derive(Debug, Parser)]
#[command(
    name = "mpgps-sim",
    version,
    about = "Multi-server packetized GPS downlink simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every grid point and replication of a scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Verify the delay, service, backlog and lag bounds in error-free mode.
    CheckBounds {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario over axes given on the command line.
    Sweep {
        config: PathBuf,
        /// `M=1:6`, `U=2,4,6` or `P=0.5,1,none` (power budgets in W).
        #[arg(long = "axis", value_name = "NAME=VALUES")]
        axes: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the scenario JSON schema.
    Schema,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<u64>,
    /// pgps, mpgps, ampgps or ompgps; repeat or comma-separate for several.
    #[arg(long = "mode", value_delimiter = ',')]
    pub modes: Vec<String>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `a:b`, `a:b:step` or `a,b,c`.
pub fn parse_range(text: &str) -> anyhow::Result<Vec<usize>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad range {text:?}"))?;
        let (lo, hi, step) = match parts.as_slice() {
            [lo, hi] => (*lo, *hi, 1),
            [lo, hi, step] => (*lo, *hi, *step),
            _ => bail!("bad range {text:?}"),
        };
        if step == 0 || lo > hi {
            bail!("empty range {text:?}");
        }
        Ok((lo..=hi).step_by(step).collect())
    } else {
        text.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad value {p:?}"))
            })
            .collect()
    }
}

fn parse_budgets(text: &str) -> anyhow::Result<Vec<Option<f64>>> {
    text.split(',')
        .map(|p| match p.trim() {
            "none" | "null" | "inf" => Ok(None),
            v => v
                .parse::<f64>()
                .map(Some)
                .with_context(|| format!("bad power budget {v:?}")),
        })
        .collect()
}

pub fn apply_axis(scenario: &mut Scenario, axis: &str) -> anyhow::Result<()> {
    let (name, values) = axis
        .split_once('=')
        .with_context(|| format!("axis {axis:?} must look like NAME=VALUES"))?;
    match name.trim().to_ascii_uppercase().as_str() {
        "M" => scenario.sweep.m = parse_range(values)?,
        "U" => scenario.sweep.u = parse_range(values)?,
        "P" => scenario.sweep.power_budgets_w = parse_budgets(values)?,
        other => bail!("unknown axis {other:?} (expected M, U or P)"),
    }
    Ok(())
}

fn load(config: &Path, common: &Common, axes: &[String]) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(config).map_err(Failure::Config)?;
    s.apply_env().map_err(Failure::Config)?;
    if let Some(seed) = common.seed {
        s.system.seed = seed;
    }
    if let Some(out) = &common.out {
        s.output = out.clone();
    }
    if let Some(r) = common.replications {
        s.replications = r;
    }
    if !common.modes.is_empty() {
        s.run.modes = common.modes.clone();
    }
    for axis in axes {
        apply_axis(&mut s, axis).map_err(Failure::Config)?;
    }
    Ok(s)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Schema => {
            print!("{SCHEMA}");
            Ok(())
        }
        Command::Run { config, common } => run(load(&config, &common, &[])?, common.jobs),
        Command::Sweep {
            config,
            axes,
            common,
        } => {
            if axes.is_empty() {
                return Err(Failure::Config(anyhow::anyhow!(
                    "sweep needs at least one --axis"
                )));
            }
            run(load(&config, &common, &axes)?, common.jobs)
        }
        Command::CheckBounds { config, common } => {
            let s = load(&config, &common, &[])?;
            let outcome = runner::check_bounds(&s, common.jobs)?;
            for reason in &outcome.skipped {
                eprintln!("skipped {reason}");
            }
            print!("{}", outcome.text);
            println!("config hash {}", outcome.config_hash);
            if outcome.passed() {
                println!("all bounds PASS");
                Ok(())
            } else {
                let failed = outcome.reports.iter().filter(|(_, r)| !r.passed()).count();
                Err(Failure::Violation(format!(
                    "{failed} of {} runs violated a bound",
                    outcome.reports.len()
                )))
            }
        }
    }
}

fn run(s: Scenario, jobs: Option<usize>) -> Result<(), Failure> {
    let report = runner::run_scenario(&s, jobs)?;
    for reason in &report.skipped {
        eprintln!("skipped {reason}");
    }
    println!(
        "{} runs over {} grid points written to {} (config hash {})",
        report.runs,
        report.summaries.len(),
        report.output.display(),
        report.config_hash
    );
    Ok(())
}

/// Entry point; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
