use std::ops::RangeInclusive;
use std::path::PathBuf;

use aiot_core::{EfficiencyMode, Mechanism};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "aiot-sim",
    version,
    about = "Slot-level ambient IoT inventory simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario with one seed.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate a seed range and write an aggregated table.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_parser = parse_seeds, default_value = "1..10")]
        seeds: RangeInclusive<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run EM and DCM on the same populations and report the T_99 reduction.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_parser = parse_seeds, default_value = "1..10")]
        seeds: RangeInclusive<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write preset scenario files.
    EmitPreset {
        /// Presets to write; all of them if omitted.
        names: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Preset name (device1, device2) or path to a scenario file.
    #[arg(long, default_value = "device1")]
    pub scenario: String,
    #[arg(long, value_parser = parse_mechanism)]
    pub mechanism: Option<Mechanism>,
    /// Number of paging groups.
    #[arg(long)]
    pub ng: Option<u32>,
    /// Enable the wake-up receiver; `--lp-wur=false` disables it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lp_wur: Option<bool>,
    #[arg(long, value_parser = parse_efficiency)]
    pub efficiency_mode: Option<EfficiencyMode>,
    /// Incident-power samples in dBm, one per line or as a `pin.csv`.
    #[arg(long)]
    pub pin_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write `events.csv` at the given detail.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "protocol")]
    pub events: Option<EventDetail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EventDetail {
    Protocol,
    Full,
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    s.parse()
}

fn parse_efficiency(s: &str) -> Result<EfficiencyMode, String> {
    s.parse()
}

/// `A..B` with both ends included, or a single seed.
pub fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let number = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|e| format!("bad seed `{t}`: {e}"))
    };
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (number(a)?, number(b.trim_start_matches('='))?),
        None => {
            let n = number(s)?;
            (n, n)
        }
    };
    if a > b {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(a..=b)
}
