//! `podlb`: simulation and analysis of power-of-d load balancing.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use podlb_core::lyapunov::DriftTarget;
use podlb_core::Rounding;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "podlb", version, about = "Power-of-d load balancing: simulation, fluid model, bands and drift checks")]
pub struct Cli {
    /// JSON instance description.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "PODLB_OUT", default_value = "podlb-out")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's rounding of a real `d`.
    #[arg(long = "d-round", global = true, value_parser = parse_rounding)]
    pub d_round: Option<Rounding>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_rounding(s: &str) -> std::result::Result<Rounding, String> {
    s.parse().map_err(|e: podlb_core::Error| e.to_string())
}

fn parse_target(s: &str) -> std::result::Result<DriftTarget, String> {
    s.parse().map_err(|e: podlb_core::Error| e.to_string())
}

fn parse_threshold(s: &str) -> std::result::Result<(usize, u32), String> {
    let (i, k) = s.split_once(':').ok_or("expected I:K")?;
    Ok((i.parse().map_err(|_| "bad level")?, k.parse().map_err(|_| "bad threshold")?))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the occupancy chain; writes a trajectory, estimates and a band verdict.
    Simulate(SimulateArgs),
    /// Exact stationary distribution of a small instance.
    Exact,
    /// Integrate the fluid model from the empty state.
    Ode(OdeArgs),
    /// Fluid fixed points.
    Fixedpoint,
    /// Solve the implicit equation linking `d` and `m`.
    Regime,
    /// Concentration bands and violation exponents.
    Bounds,
    /// Drift scan of one Lyapunov catalog member.
    Driftscan(DriftscanArgs),
    /// Grid checks of the elementary power inequalities.
    Taylor,
    /// Regime classification across a grid of `d` at fixed `(n, gamma)`.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    /// Number of events per replication.
    #[arg(long, conflicts_with = "time")]
    pub events: Option<u64>,
    /// Simulated time per replication.
    #[arg(long)]
    pub time: Option<f64>,
    /// Fraction of simulated time discarded as warmup.
    #[arg(long, default_value_t = podlb_core::stats::DEFAULT_WARMUP)]
    pub warmup: f64,
    #[arg(long, default_value_t = podlb_core::stats::DEFAULT_BATCHES)]
    pub batches: usize,
    /// Extra time fractions `P(s_I >= K)`, as `I:K`; repeatable.
    #[arg(long = "at-least", value_parser = parse_threshold)]
    pub at_least: Vec<(usize, u32)>,
    /// Trajectory rows per replication.
    #[arg(long, default_value_t = 1000)]
    pub snapshots: u64,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[arg(long, default_value_t = 100.0)]
    pub t_end: f64,
    /// Output spacing.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
}

#[derive(Debug, Args)]
pub struct DriftscanArgs {
    /// Catalog member as JSON, e.g. `{"family":"lower_l","l":0,"k":2}`.
    #[arg(long, default_value = r#"{"family":"base_v1"}"#)]
    pub family: String,
    #[arg(long = "scan-budget", default_value_t = 10_000)]
    pub scan_budget: usize,
    #[arg(long = "drift-target", default_value = "template", value_parser = parse_target)]
    pub drift_target: DriftTarget,
    /// Only states with `V >= value-floor` are scanned.
    #[arg(long, default_value_t = 0.0)]
    pub value_floor: f64,
    /// Cap on `sum_{l >= m+2} s_l` used by the upper-bound family.
    #[arg(long, default_value_t = 1.0)]
    pub b_m2: f64,
    /// Comma-separated `n` values; scans each with `d` from the implicit equation.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Log-spaced grid points between `log(n)^3` and `n`.
    #[arg(long, default_value_t = 24)]
    pub points: usize,
    /// Overrides the config's `n`; may exceed the simulator's range.
    #[arg(long)]
    pub n: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(artifacts) => {
            for name in artifacts.names() {
                println!("{}", cli.out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
