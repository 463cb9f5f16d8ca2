//! `cardest`: batch runner for the gossip-based cardinality estimator.
//!
//! Four subcommands: `simulate` writes one estimate row per trial, `sweep`
//! reproduces one of four standard experiment tables, `validate` checks the
//! closed forms against fresh simulations, and `topology` reconstructs and
//! scores one trial's communication graph.
//!
//! Settings resolve in precedence order: flags, then the config file, then
//! the `CARDEST_SEED` environment variable (seed only), then built-in
//! defaults (300 alive nodes in an ID space of 350 on the unit square,
//! radius 0.1, f = 0.5, q = 0.1). Outputs are CSV with '.' decimals plus a
//! `manifest.toml` that reproduces the run when passed back via `--config`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use cardest_core::{CoverageMetric, DistanceMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Debug)]
pub enum CmdError {
    /// Unusable configuration or arguments.
    Config(String),
    /// Filesystem trouble.
    Io(String),
    /// Validation checks failed.
    ChecksFailed(u32),
}

impl CmdError {
    fn exit_code(&self) -> u8 {
        match self {
            CmdError::ChecksFailed(_) => 1,
            CmdError::Config(_) => 2,
            CmdError::Io(_) => 3,
        }
    }
}

impl From<cardest_core::Error> for CmdError {
    fn from(e: cardest_core::Error) -> Self {
        CmdError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "cardest", version, about = "Estimate the size of an anonymous gossip network")]
struct Cli {
    /// Cap on worker threads for the trial runners (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials and write one estimate row per trial.
    Simulate(SimulateArgs),
    /// Reproduce one of the standard experiment tables.
    Sweep(SweepArgs),
    /// Check the closed forms against fresh simulations; exit 1 on any FAIL.
    Validate(ValidateArgs),
    /// Reconstruct one trial's communication graph and score it.
    Topology(TopologyArgs),
}

/// One optional flag per config key; set flags override the config file.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// Alive nodes per trial.
    #[arg(long)]
    n: Option<u32>,
    /// Size of the ID space.
    #[arg(long)]
    n_max: Option<u32>,
    /// Field length.
    #[arg(long)]
    length: Option<f64>,
    /// Field width.
    #[arg(long)]
    width: Option<f64>,
    /// Communication radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Initial transmit probability, in (0, 1].
    #[arg(long)]
    f_initial: Option<f64>,
    /// Per-receiver erasure probability, in [0, 1).
    #[arg(long)]
    erasure: Option<f64>,
    /// Protocol rounds before the query.
    #[arg(long)]
    rounds: Option<u32>,
    /// Query size K.
    #[arg(long)]
    queried: Option<u32>,
    /// Trials per run or grid point.
    #[arg(long)]
    trials: Option<u32>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Distance rule: planar or toroidal.
    #[arg(long, value_parser = config::parse_mode)]
    distance_mode: Option<DistanceMode>,
    /// Carry coordinates in packets (true/false).
    #[arg(long)]
    topology: Option<bool>,
    /// Bits budgeted per coordinate in the packet-size accounting.
    #[arg(long)]
    coord_bits: Option<u32>,
    /// Coverage target in (0, 1] for time and query-size sweeps.
    #[arg(long)]
    coverage_threshold: Option<f64>,
    /// What the target measures: count (union fraction) or estimate
    /// (relative accuracy of the size estimate).
    #[arg(long, value_parser = parse_metric)]
    coverage_metric: Option<CoverageMetric>,
    /// Round budget for time-to-coverage runs.
    #[arg(long)]
    round_cap: Option<u32>,
}

fn parse_metric(s: &str) -> Result<CoverageMetric, String> {
    s.parse::<CoverageMetric>().map_err(|e| e.to_string())
}

impl ConfigFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            n_max: self.n_max,
            length: self.length,
            width: self.width,
            radius: self.radius,
            f_initial: self.f_initial,
            erasure: self.erasure,
            rounds: self.rounds,
            queried: self.queried,
            trials: self.trials,
            seed: self.seed,
            distance_mode: self.distance_mode,
            topology: self.topology,
            coord_bits: self.coord_bits,
            coverage_threshold: self.coverage_threshold,
            coverage_metric: self.coverage_metric,
            round_cap: self.round_cap,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file (flat TOML; a run manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for estimates.csv and manifest.toml.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write trace.csv, the round-by-round node states of trial 0.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Figure {
    /// Estimate against query size, per (rounds, f) pair.
    Fig1,
    /// Rounds to the coverage target against f, per query size.
    Fig2,
    /// Smallest sufficient query size against the erasure probability.
    Fig3,
    /// Smallest sufficient query size against the number of rounds.
    Fig4,
}

#[derive(Args)]
struct SweepArgs {
    /// Which table to produce.
    figure: Figure,
    /// Config file (flat TOML; a run manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the sweep CSV and manifest.toml.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct ValidateArgs {
    /// Base seed for the checks (falls back to CARDEST_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per statistical check; tight checks keep their own floors.
    #[arg(long, default_value_t = 4000)]
    trials: u32,
    /// Self-test hook: multiplies the predicted single-delivery gain.
    /// Anything but 1.0 must flip that check to FAIL.
    #[arg(long, default_value_t = 1.0, hide_short_help = true)]
    distort_gain: f64,
}

#[derive(Args)]
struct TopologyArgs {
    /// Config file (flat TOML; a run manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for vertices.csv, edges.csv, report.csv, manifest.toml.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

fn dispatch(command: Command) -> Result<(), CmdError> {
    match command {
        Command::Simulate(args) => {
            let resolved = config::resolve(args.config.as_deref(), &args.flags.overrides())?;
            commands::simulate(&resolved, &args.out_dir, args.trace)
        }
        Command::Sweep(args) => {
            let resolved = config::resolve(args.config.as_deref(), &args.flags.overrides())?;
            commands::sweep(&resolved, args.figure, &args.out_dir)
        }
        Command::Validate(args) => {
            let seed = match args.seed {
                Some(s) => s,
                None => config::resolve(None, &Overrides::default())?.trial.base_seed,
            };
            commands::validate(seed, args.trials, args.distort_gain)
        }
        Command::Topology(args) => {
            let resolved = config::resolve(args.config.as_deref(), &args.flags.overrides())?;
            commands::topology(&resolved, &args.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        if let Err(e) = pool {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CmdError::Config(msg) | CmdError::Io(msg) => eprintln!("error: {msg}"),
                CmdError::ChecksFailed(count) => eprintln!("error: {count} check(s) failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
