use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use aiot_core::channel::parse_pin_samples;
use aiot_core::metrics::{mean_std, write_file};
use aiot_core::{
    run_with, sweep_csv, LogLevel, Mechanism, RunOptions, Scenario, ScenarioFile, SimResult,
    Summary, PRESETS,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::args::{Cli, Command, EventDetail, OutputArgs, ScenarioArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aiot_core::Error),

    #[error("cannot read {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot create {}: {source}", .path.display())]
    CreateDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            output,
        } => {
            let s = resolve(&scenario)?.with_seed(seed);
            let r = run_leg(&s, &output)?;
            println!("{}", summary_line(&r.summary));
            Ok(())
        }
        Command::Sweep {
            scenario,
            seeds,
            output,
        } => sweep(&resolve(&scenario)?, seeds, &output),
        Command::Compare {
            scenario,
            seeds,
            output,
        } => compare(&resolve(&scenario)?, seeds, &output),
        Command::EmitPreset { names, out } => emit_presets(&names, &out),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Preset or scenario file, then command-line overrides.
pub fn resolve(args: &ScenarioArgs) -> Result<Scenario> {
    let mut s = if PRESETS.contains(&args.scenario.as_str()) {
        Scenario::preset(&args.scenario)?
    } else {
        let path = Path::new(&args.scenario);
        ScenarioFile::parse(&read(path)?, &args.scenario)?.resolve()?
    };
    if let Some(m) = args.mechanism {
        s.mechanism = m;
    }
    if let Some(n) = args.ng {
        s.n_g = n;
    }
    if let Some(on) = args.lp_wur {
        s.lp_wur = on;
    }
    if let Some(mode) = args.efficiency_mode {
        s.efficiency_mode = mode;
    }
    if let Some(path) = &args.pin_file {
        let origin = path.display().to_string();
        s.pin_samples = Some(parse_pin_samples(&read(path)?, &origin)?);
    }
    s.validate()?;
    Ok(s)
}

fn run_dir(out: &Path, s: &Scenario) -> PathBuf {
    out.join(format!("{}_{}_{}", s.name, s.mechanism.name(), s.rng_seed))
}

fn run_leg(s: &Scenario, output: &OutputArgs) -> Result<SimResult> {
    let log = match output.events {
        None => LogLevel::Off,
        Some(EventDetail::Protocol) => LogLevel::Protocol,
        Some(EventDetail::Full) => LogLevel::Full,
    };
    let r = run_with(s, RunOptions { log })?;
    r.emit(&run_dir(&output.out, s), output.events.is_some())?;
    Ok(r)
}

fn run_seeds(
    base: &Scenario,
    legs: Vec<(u64, Mechanism)>,
    output: &OutputArgs,
) -> Result<Vec<Summary>> {
    legs.into_par_iter()
        .map(|(seed, m)| {
            let s = base.clone().with_seed(seed).with_mechanism(m);
            run_leg(&s, output).map(|r| r.summary)
        })
        .collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::CreateDir {
        path: path.to_path_buf(),
        source,
    })
}

fn seconds(v: Option<f64>) -> String {
    v.map(|t| format!("{t:.3} s"))
        .unwrap_or_else(|| "not reached".into())
}

fn summary_line(s: &Summary) -> String {
    format!(
        "{} {} seed {}: {}/{} inventoried, T50 {}, T90 {}, T99 {}, {} rounds, {:.2} attempts per device",
        s.scenario,
        s.mechanism,
        s.seed,
        s.inventoried,
        s.n_devices,
        seconds(s.t50_s),
        seconds(s.t90_s),
        seconds(s.t99_s),
        s.rounds,
        s.mean_attempts
    )
}

fn sweep(base: &Scenario, seeds: RangeInclusive<u64>, output: &OutputArgs) -> Result<()> {
    let legs = seeds.map(|seed| (seed, base.mechanism)).collect();
    let summaries = run_seeds(base, legs, output)?;
    for s in &summaries {
        println!("{}", summary_line(s));
    }
    create_dir(&output.out)?;
    let path = output
        .out
        .join(format!("{}_{}_sweep.csv", base.name, base.mechanism.name()));
    write_file(&path, &sweep_csv(&summaries))?;
    match mean_std(summaries.iter().map(|s| s.t99_s)) {
        Some((mean, std)) => println!("T99 mean {mean:.3} s, stddev {std:.3} s"),
        None => println!("T99 not reached in any run"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// One seed of a paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub seed: u64,
    pub em_t99: Option<f64>,
    pub dcm_t99: Option<f64>,
}

impl Pair {
    /// Percentage by which DCM shortens the EM completion time.
    pub fn reduction_pct(&self) -> Option<f64> {
        match (self.em_t99, self.dcm_t99) {
            (Some(em), Some(dcm)) if em > 0.0 => Some(100.0 * (1.0 - dcm / em)),
            _ => None,
        }
    }
}

pub fn pair_up(summaries: &[Summary]) -> Vec<Pair> {
    let mut pairs: Vec<Pair> = Vec::new();
    for s in summaries {
        let i = match pairs.iter().position(|p| p.seed == s.seed) {
            Some(i) => i,
            None => {
                pairs.push(Pair {
                    seed: s.seed,
                    em_t99: None,
                    dcm_t99: None,
                });
                pairs.len() - 1
            }
        };
        if s.mechanism == Mechanism::Em.name() {
            pairs[i].em_t99 = s.t99_s;
        } else {
            pairs[i].dcm_t99 = s.t99_s;
        }
    }
    pairs.sort_by_key(|p| p.seed);
    pairs
}

pub fn compare_csv(pairs: &[Pair]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("seed,em_t99_s,dcm_t99_s,reduction_pct\n");
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.seed,
            cell(p.em_t99),
            cell(p.dcm_t99),
            cell(p.reduction_pct())
        );
    }
    let _ = writeln!(
        out,
        "mean,{},{},{}",
        cell(mean_std(pairs.iter().map(|p| p.em_t99)).map(|m| m.0)),
        cell(mean_std(pairs.iter().map(|p| p.dcm_t99)).map(|m| m.0)),
        cell(mean_std(pairs.iter().map(Pair::reduction_pct)).map(|m| m.0))
    );
    out
}

fn compare(base: &Scenario, seeds: RangeInclusive<u64>, output: &OutputArgs) -> Result<()> {
    let legs = seeds
        .flat_map(|seed| [(seed, Mechanism::Em), (seed, Mechanism::Dcm)])
        .collect();
    let summaries = run_seeds(base, legs, output)?;
    let pairs = pair_up(&summaries);
    for p in &pairs {
        let reduction = p
            .reduction_pct()
            .map(|r| format!("{r:.1}%"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "seed {}: em T99 {}, dcm T99 {}, reduction {reduction}",
            p.seed,
            seconds(p.em_t99),
            seconds(p.dcm_t99)
        );
    }
    create_dir(&output.out)?;
    let path = output.out.join(format!("{}_compare.csv", base.name));
    write_file(&path, &compare_csv(&pairs))?;
    let em = mean_std(pairs.iter().map(|p| p.em_t99)).map(|m| m.0);
    let dcm = mean_std(pairs.iter().map(|p| p.dcm_t99)).map(|m| m.0);
    let reductions: Vec<f64> = pairs.iter().filter_map(Pair::reduction_pct).collect();
    println!("mean T99: em {}, dcm {}", seconds(em), seconds(dcm));
    match mean_std(reductions.iter().copied().map(Some)) {
        Some((mean, _)) => println!(
            "mean T99 reduction: {mean:.1}% over {} paired seeds",
            reductions.len()
        ),
        None => println!("mean T99 reduction: n/a (T99 not reached)"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn emit_presets(names: &[String], out: &Path) -> Result<()> {
    let names: Vec<&str> = if names.is_empty() {
        PRESETS.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    let scenarios = names
        .iter()
        .map(|n| Scenario::preset(n))
        .collect::<aiot_core::Result<Vec<_>>>()?;
    create_dir(out)?;
    for s in &scenarios {
        let path = out.join(format!("{}.toml", s.name));
        write_file(&path, &ScenarioFile::from_scenario(s).to_toml())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
