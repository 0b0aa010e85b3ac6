//! Command-line front end shared by the `uavlab` binary and its tests.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 on bad usage
//! (unknown flags, malformed values, unreadable or invalid configuration).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::coverage::compute_coverage_map;
use crate::error::Error;
use crate::harness::{self, ExperimentConfig};
use crate::rl::AgentKind;
use crate::world::Position3D;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "uavlab", version, about = "UAV relay coverage, PCA and TD3 training laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the ground coverage map for one relay pose and write it as CSV.
    Coverage {
        #[command(flatten)]
        config: ConfigArg,
        /// Relay pose `x,y,z` in meters.
        #[arg(long, value_name = "X,Y,Z", value_parser = parse_pose)]
        uav: Position3D,
        /// Scenario seed (defaults to the config's seed_base).
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// PCA fidelity sweep: retained components and reconstruction MAE per variance target.
    Pca {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated variance targets in (0, 1].
        #[arg(long, value_delimiter = ',', value_parser = parse_target, default_value = "0.96,0.98,0.995")]
        targets: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for pca_fidelity.csv; the table goes to stdout when omitted.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train one agent kind over several seeded runs.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Agent kind: td3, td3pca or etd3.
        #[arg(long, value_parser = parse_agent)]
        agent: AgentKind,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Base seed; run r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the config's output_dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads for independent runs.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Train every configured agent and write the comparison report.
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        parallel: Option<usize>,
    },
}

fn parse_pose(s: &str) -> std::result::Result<Position3D, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Position3D::new(x, y, z)),
        _ => Err("expected three finite numbers `x,y,z`".into()),
    }
}

fn parse_target(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if t > 0.0 && t <= 1.0 {
        Ok(t)
    } else {
        Err(format!("variance target {t} is outside (0, 1]"))
    }
}

fn parse_agent(s: &str) -> std::result::Result<AgentKind, String> {
    AgentKind::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(arg: &ConfigArg) -> std::result::Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(&arg.config).map_err(|e| Failure::Usage(format!("config {}: {e}", arg.config.display())))
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> std::result::Result<PathBuf, Failure> {
    flag.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set output_dir".into()))
}

fn checked(cfg: ExperimentConfig) -> std::result::Result<ExperimentConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn execute(command: Command, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Coverage { config, uav, seed, out } => {
            let cfg = load_config(&config)?;
            let scenario = harness::build_scenario(&cfg, seed.unwrap_or(cfg.seed_base))?;
            let map = compute_coverage_map(&scenario, &uav, &cfg.channel)?;
            match out {
                Some(path) => std::fs::write(path, map.to_csv()).map_err(Error::from)?,
                None => stdout.write_all(map.to_csv().as_bytes()).map_err(Error::from)?,
            }
        }
        Command::Pca { config, targets, seed, out } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed_base);
            let scenario = harness::build_scenario(&cfg, seed)?;
            let rows = harness::pca_fidelity_report(&scenario, &cfg.channel, &targets, cfg.pca.fidelity_batch, seed)?;
            match out {
                Some(dir) => harness::write_fidelity(&rows, dir)?,
                None => {
                    let mut s = String::from("target,k,fraction_components,mean_mae_db\n");
                    for r in &rows {
                        s += &format!("{},{},{},{}\n", r.target, r.k, r.fraction_components, r.mean_mae_db);
                    }
                    stdout.write_all(s.as_bytes()).map_err(Error::from)?;
                }
            }
        }
        Command::Train { config, agent, runs, episodes, seed, out, parallel } => {
            let mut cfg = load_config(&config)?;
            cfg.agents = vec![agent];
            cfg.runs = runs.unwrap_or(cfg.runs);
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            cfg.seed_base = seed.unwrap_or(cfg.seed_base);
            cfg.parallel = parallel.unwrap_or(cfg.parallel);
            let cfg = checked(cfg)?;
            let dir = out_dir(out, &cfg)?;
            let result = harness::run_campaign(&cfg)?;
            harness::write_campaign(&result, &cfg, &dir)?;
        }
        Command::Compare { config, out, parallel } => {
            let mut cfg = load_config(&config)?;
            cfg.parallel = parallel.unwrap_or(cfg.parallel);
            let cfg = checked(cfg)?;
            let dir = out_dir(out, &cfg)?;
            let result = harness::run_campaign(&cfg)?;
            harness::write_campaign(&result, &cfg, &dir)?;
            for a in &result.agents {
                let ep = a.convergence.episode.map_or("none".to_string(), |e| e.to_string());
                writeln!(stdout, "{}: episodes_to_threshold={ep} final_mean_reward={}", a.kind.name(), a.final_mean_reward)
                    .map_err(Error::from)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the chosen subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Convenience wrapper used by the binary.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    run(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
