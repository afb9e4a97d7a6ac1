//! `castaway` command-line front end.
//!
//! Every command resolves and validates its inputs, computes all results in
//! memory and only then creates the output directory, so a bad config never
//! leaves partial artifacts behind.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use castaway::config::{Config, ConfigError};
use castaway::export::{write_episode_csv, write_truth_csv};
use castaway::harness::{monte_carlo, run_episode, timing_sweep, Policy};
use castaway::sensor::{fit_detection_model, read_detection_table, FitError};
use castaway::world::{generate_scenario, ScenarioGenerator, DEFAULT_SCENARIO_SEED};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Environment variable that fixes the worker thread count.
const THREADS_ENV: &str = "CASTAWAY_THREADS";

#[derive(Parser)]
#[command(
    name = "castaway",
    version,
    about = "Track drifting castaways from a single UAV"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed; defaults to the scenario seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// mpc, hover[:Z], lawnmower[:Z] or openloop.
        #[arg(long, default_value = "mpc")]
        policy: Policy,
        /// Also write SVG plots derived from the episode CSV.
        #[arg(long)]
        plots: bool,
    },
    /// Compare policies over seeded Monte Carlo runs.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Number of runs; defaults to `monte_carlo.runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Policy to compare (repeatable); defaults to `monte_carlo.policies`.
        #[arg(long = "policy")]
        policies: Vec<Policy>,
    },
    /// Measure planning time over a grid of horizons and target counts.
    Timing {
        #[command(flatten)]
        common: Common,
        /// Horizons, comma separated; defaults to `timing.horizons`.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        /// Target counts, comma separated; defaults to `timing.castaways`.
        #[arg(long, value_delimiter = ',')]
        castaways: Vec<usize>,
        /// Timed calls per cell; defaults to `timing.solves`.
        #[arg(long)]
        solves: Option<usize>,
    },
    /// Fit the detection model to a table of detector counts.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV with header `altitude_m,tp,fn`.
        #[arg(long, value_name = "PATH")]
        table: PathBuf,
    },
    /// Draw a random scenario and write it with its ground truth.
    GenScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        castaways: Option<usize>,
        /// Number of steps.
        #[arg(long)]
        duration: Option<usize>,
    },
}

/// Exit codes.
mod code {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVALID: u8 = 3;
    pub const IO: u8 = 4;
    pub const FIT: u8 = 5;
    pub const SIZE: u8 = 6;
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<castaway::Error>() {
            return match e {
                castaway::Error::Config(c) => config_code(c),
                castaway::Error::Fit(_) => code::FIT,
                castaway::Error::Size(_) => code::SIZE,
                castaway::Error::Precondition(_) => code::INVALID,
                castaway::Error::Io(_) => code::IO,
                _ => code::OTHER,
            };
        }
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            return config_code(c);
        }
        if cause.is::<FitError>() {
            return code::FIT;
        }
        if cause.is::<std::io::Error>() {
            return code::IO;
        }
    }
    code::OTHER
}

fn config_code(e: &ConfigError) -> u8 {
    match e {
        ConfigError::Parse { .. } => code::USAGE,
        ConfigError::Version { .. } | ConfigError::Invalid { .. } => code::INVALID,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { code::USAGE } else { 0 });
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(code::USAGE);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Config::from_json(&text).with_context(|| format!("in {}", path.display()))
}

/// Header shared by the JSON artifacts.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a Config,
    #[serde(flatten)]
    body: T,
}

fn to_json<T: Serialize>(command: &str, seed: u64, config: &Config, body: T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Artifact {
        command,
        seed,
        config,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

/// Creates `out` and writes every file; nothing is written before all
/// contents exist.
fn write_all(out: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, bytes) in files {
        let path = out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            common,
            policy,
            plots,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(cfg.scenario.seed);
            policy
                .validate(&cfg.limits)
                .map_err(|m| ConfigError::Invalid {
                    field: "policy".into(),
                    message: m,
                })?;
            let log = run_episode(&cfg, &policy, seed)?;
            let mut csv = Vec::new();
            write_episode_csv(&mut csv, &log, &cfg.to_json())?;
            #[derive(Serialize)]
            struct Body<'a> {
                policy: String,
                summary: &'a castaway::harness::EpisodeSummary,
            }
            let summary = to_json(
                "simulate",
                seed,
                &cfg,
                Body {
                    policy: policy.to_string(),
                    summary: &log.summary,
                },
            )?;
            write_all(
                &common.out,
                &[("episode.csv", csv), ("summary.json", summary.into_bytes())],
            )?;
            if plots {
                plot::write_plots(&common.out.join("episode.csv"), &common.out)?;
            }
            println!("{}", common.out.join("episode.csv").display());
        }
        Command::Mc {
            common,
            runs,
            policies,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(cfg.scenario.seed);
            let runs = runs.unwrap_or(cfg.monte_carlo.runs);
            let policies = if policies.is_empty() {
                cfg.monte_carlo.policies.clone()
            } else {
                policies
            };
            let table = monte_carlo(&cfg, &policies, runs, seed)?;
            for row in &table.rows {
                println!(
                    "{:<16} mean summed trace {:>12.4} ± {:.4}",
                    row.policy, row.mean_summed_trace.mean, row.mean_summed_trace.std
                );
            }
            let json = to_json("mc", seed, &cfg, &table)?;
            write_all(&common.out, &[("mc.json", json.into_bytes())])?;
        }
        Command::Timing {
            common,
            horizons,
            castaways,
            solves,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(cfg.scenario.seed);
            let horizons = if horizons.is_empty() {
                cfg.timing.horizons.clone()
            } else {
                horizons
            };
            let castaways = if castaways.is_empty() {
                cfg.timing.castaways.clone()
            } else {
                castaways
            };
            let solves = solves.unwrap_or(cfg.timing.solves);
            let mut run_cfg = cfg.clone();
            run_cfg.planner.optimizer.seed = seed;
            let table = timing_sweep(&run_cfg, &horizons, &castaways, solves)?;
            for c in &table.cells {
                println!(
                    "N={:<3} C={:<3} mean {:>10.3} ms",
                    c.horizon, c.castaways, c.mean_ms
                );
            }
            let json = to_json("timing", seed, &cfg, &table)?;
            write_all(&common.out, &[("timing.json", json.into_bytes())])?;
        }
        Command::Fit { common, table } => {
            let mut cfg = load_config(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(cfg.scenario.seed);
            let bytes = fs::read(&table).with_context(|| format!("reading {}", table.display()))?;
            let samples = read_detection_table(bytes.as_slice())
                .with_context(|| format!("in {}", table.display()))?;
            let model = fit_detection_model(&samples)?;
            // The resolved config carries the fitted model, so it can be fed
            // straight back into the other commands.
            cfg.sensor.detection = model;
            cfg.validate()?;
            #[derive(Serialize)]
            struct Body<'a> {
                table: String,
                samples: &'a [castaway::sensor::DetectionSample],
                model: castaway::sensor::DetectionModel,
            }
            let json = to_json(
                "fit",
                seed,
                &cfg,
                Body {
                    table: table.display().to_string(),
                    samples: &samples,
                    model,
                },
            )?;
            println!("{}", serde_json::to_string(&model)?);
            write_all(&common.out, &[("detection_model.json", json.into_bytes())])?;
        }
        Command::GenScenario {
            common,
            castaways,
            duration,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(DEFAULT_SCENARIO_SEED);
            let mut generator = ScenarioGenerator::default();
            if let Some(c) = castaways {
                generator.castaways = c;
            }
            if let Some(d) = duration {
                generator.duration = d;
            }
            if generator.castaways == 0 {
                return Err(ConfigError::Invalid {
                    field: "castaways".into(),
                    message: "must be at least 1".into(),
                }
                .into());
            }
            cfg.scenario = generator.generate(seed);
            cfg.validate()?;
            let truth = generate_scenario(&cfg.scenario)?;
            let config_json = cfg.to_json();
            let mut csv = Vec::new();
            write_truth_csv(&mut csv, &truth, seed, &config_json)?;
            write_all(
                &common.out,
                &[
                    ("config.json", format!("{config_json}\n").into_bytes()),
                    ("truth.csv", csv),
                ],
            )?;
            println!("{}", common.out.join("config.json").display());
        }
    }
    Ok(())
}
