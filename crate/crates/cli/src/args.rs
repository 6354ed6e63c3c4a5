use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Smart irrigation network simulator and edge-node service.
#[derive(Debug, Parser)]
#[command(name = "sinet", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each has a `SINET_` environment
/// variable override.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario TOML file; the built-in two-greenhouse scenario if omitted.
    #[arg(long, global = true, env = "SINET_SCENARIO")]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long, global = true, env = "SINET_SEED")]
    pub seed: Option<u64>,
    /// Output directory for run artifacts and the service store.
    #[arg(long, global = true, env = "SINET_OUT", default_value = "sinet-out")]
    pub out: PathBuf,
    /// HTTP listen address for `serve`.
    #[arg(long, global = true, env = "SINET_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Simulated seconds per wall-clock second in `serve`.
    #[arg(long, global = true, env = "SINET_TIME_SCALE", default_value_t = 60.0)]
    pub time_scale: f64,
    /// Seconds excluded from the start of every summary.
    #[arg(long, global = true, env = "SINET_WARM_UP", default_value_t = sinet_core::metrics::DEFAULT_WARM_UP_SECS)]
    pub warm_up: u64,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Checks a scenario and prints any violations.
    Validate,
    /// Runs a scenario and writes the run log, series and summary CSVs.
    Run,
    /// Runs a scenario and compares its first two differently controlled greenhouses.
    Compare,
    /// Serves the edge-node API against simulated or real devices.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Accept gateway connections here instead of simulating devices.
    #[arg(long, env = "SINET_GATEWAY_LISTEN")]
    pub gateway_listen: Option<SocketAddr>,
    /// Store file; defaults to `<out>/edge-store.jsonl`.
    #[arg(long, env = "SINET_STORE")]
    pub store: Option<PathBuf>,
    /// Keep the store in memory only.
    #[arg(long, conflicts_with = "store")]
    pub ephemeral: bool,
}
