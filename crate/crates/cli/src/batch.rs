//! One-shot commands: validate, run, compare.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sinet_core::metrics::{self, ComparisonReport, RunSummary};
use sinet_core::netsim::RunLog;
use sinet_core::report::series_csv;
use sinet_core::{default_scenario, validate_scenario, GreenhouseId, ScenarioConfig, SimTime};
use tracing::info;

use crate::args::CommonArgs;
use crate::InputError;

pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.txt";

pub fn series_file(gh: GreenhouseId) -> String {
    format!("series-{gh}.csv")
}

/// Loads the scenario named by `args` (or the built-in one), applies the
/// seed override and validates it.
pub fn load_scenario(args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.scenario {
        Some(path) => ScenarioConfig::load(path)
            .map_err(|e| InputError(format!("cannot load scenario {}: {e}", path.display())))?,
        None => default_scenario(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = validate_scenario(&cfg);
    if !report.is_empty() {
        return Err(InputError(format!("invalid scenario:\n{report}")).into());
    }
    Ok(cfg)
}

fn warm_up(args: &CommonArgs, cfg: &ScenarioConfig) -> Result<SimTime> {
    if args.warm_up >= cfg.duration {
        return Err(InputError(format!(
            "warm-up {} s must be shorter than the scenario duration {} s",
            args.warm_up, cfg.duration
        ))
        .into());
    }
    Ok(SimTime::from_secs(args.warm_up))
}

pub fn cmd_validate(args: &CommonArgs) -> Result<ScenarioConfig> {
    let cfg = load_scenario(args)?;
    println!(
        "scenario ok: {} greenhouses, {} gateways, {} s, seed {}",
        cfg.greenhouses.len(),
        cfg.gateways.len(),
        cfg.duration,
        cfg.seed
    );
    Ok(cfg)
}

fn simulate(cfg: &ScenarioConfig) -> Result<RunLog> {
    let (log, node) = sinet_core::edge::simulate(cfg)?;
    info!(
        records = log.records.len(),
        stored = node.store().len(),
        egress = node.guard().egress_count(),
        "simulation finished"
    );
    Ok(log)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: RunSummary,
}

pub fn cmd_run(args: &CommonArgs) -> Result<RunOutput> {
    let cfg = load_scenario(args)?;
    let warm = warm_up(args, &cfg)?;
    let log = simulate(&cfg)?;
    let summary = metrics::summarize(&log, &cfg, warm)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let runlog = args.out.join(RUNLOG_FILE);
    let mut out = BufWriter::new(fs::File::create(&runlog).with_context(|| format!("creating {}", runlog.display()))?);
    log.write_jsonl(&mut out)?;
    out.flush()?;
    let mut files = vec![runlog];
    for gh in &cfg.greenhouses {
        files.push(write_file(&args.out, &series_file(gh.id), &series_csv(&log, &cfg, gh.id))?);
    }
    files.push(write_file(&args.out, SUMMARY_FILE, &summary.to_csv())?);
    print!("{}", summary.to_key_values());
    Ok(RunOutput { files, summary })
}

/// First two greenhouses, in scenario order, whose strategies differ.
pub fn comparison_pair(cfg: &ScenarioConfig) -> Option<(GreenhouseId, GreenhouseId)> {
    let first = cfg.greenhouses.first()?;
    let second = cfg.greenhouses.iter().find(|g| g.strategy.kind() != first.strategy.kind())?;
    Some((first.id, second.id))
}

pub fn cmd_compare(args: &CommonArgs) -> Result<ComparisonReport> {
    let cfg = load_scenario(args)?;
    let (a, b) = comparison_pair(&cfg).ok_or_else(|| {
        InputError("comparison needs at least two greenhouses with different strategies".into())
    })?;
    let warm = warm_up(args, &cfg)?;
    let log = simulate(&cfg)?;
    let summary = metrics::summarize(&log, &cfg, warm)?;
    let report = metrics::compare(
        summary.greenhouse(a).expect("summary covers every greenhouse"),
        summary.greenhouse(b).expect("summary covers every greenhouse"),
    )?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_file(&args.out, SUMMARY_FILE, &summary.to_csv())?;
    write_file(&args.out, COMPARISON_FILE, &report.to_key_values())?;
    print!("{}", report.to_key_values());
    match report.water_saving {
        Some(s) => println!("water saving of {b} relative to {a}: {:.1}%", s * 100.0),
        None => println!("water saving undefined: {a} never opened its valve"),
    }
    Ok(report)
}
