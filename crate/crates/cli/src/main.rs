use std::io::IsTerminal;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use sinet_cli::args::{Cli, Command, CommonArgs, ServeArgs};
use sinet_cli::service::{self, ServeOptions};
use sinet_cli::{batch, exit_code, InputError};
use sinet_core::SimTime;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let res = match &cli.command {
        Command::Validate => batch::cmd_validate(&cli.common).map(drop),
        Command::Run => batch::cmd_run(&cli.common).map(drop),
        Command::Compare => batch::cmd_compare(&cli.common).map(drop),
        Command::Serve(args) => serve(&cli.common, args),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn serve(common: &CommonArgs, args: &ServeArgs) -> Result<()> {
    let config = batch::load_scenario(common)?;
    if !(common.time_scale.is_finite() && common.time_scale > 0.0) {
        return Err(InputError(format!("time scale must be positive, got {}", common.time_scale)).into());
    }
    let store = if args.ephemeral {
        None
    } else {
        Some(args.store.clone().unwrap_or_else(|| common.out.join("edge-store.jsonl")))
    };
    let opts = ServeOptions {
        config,
        listen: common.listen,
        time_scale: common.time_scale,
        warm_up: SimTime::from_secs(common.warm_up),
        store,
        gateway_listen: args.gateway_listen,
    };
    tokio::runtime::Runtime::new()?.block_on(service::serve(opts, shutdown_signal()))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutdown requested");
}
