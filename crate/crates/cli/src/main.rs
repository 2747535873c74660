use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use iab_core::experiments::output::{default_notes, git_describe, write_meta, write_results_csv, write_traces, Meta};
use iab_core::experiments::{aggregate, monte_carlo, sweep, Scheme, SweepAxis, SCHEMA_VERSION};
use iab_core::ScenarioConfig;

#[derive(Parser)]
#[command(name = "iab-sim", version, about = "Multi-hop IAB mmWave resource allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run paired Monte-Carlo trials and write aggregates, traces and metadata.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scenario file (TOML, or JSON by extension); defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated schemes: proposed, sh_max_sinr, mh_max_sinr, sh_prop, direct_access.
    #[arg(long, value_delimiter = ',', default_value = "proposed")]
    scheme: Vec<Scheme>,
    /// Sweep as `<axis>=<v1,v2,...>` with axis num_ues, min_rate or num_sbs.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Master seed; overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Deployment case: 1 (4 SBSs) or 2 (8 SBSs).
    #[arg(long)]
    case: Option<u8>,
    /// 10 UEs and 16 subchannels.
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// 30 UEs and 50 subchannels.
    #[arg(long)]
    paper_scale: bool,
}

fn parse_sweep(spec: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let Some((axis, values)) = spec.split_once('=') else {
        bail!("sweep must look like <axis>=<v1,v2,...>, got `{spec}`");
    };
    let axis = SweepAxis::parse(axis.trim())?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value `{v}`")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    Ok((axis, values))
}

fn resolve_config(args: &SimulateArgs) -> Result<ScenarioConfig> {
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::from_path(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(case) = args.case {
        config = config.with_case(case)?;
    }
    if args.desk_scale {
        config = config.desk_scale();
    }
    if args.paper_scale {
        config = config.paper_scale();
    }
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = resolve_config(&args)?;
    let seed = config.rng_seed;
    let clock = Instant::now();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let (axis_name, values, rows, aborted) = match &args.sweep {
        Some(spec) => {
            let (axis, values) = parse_sweep(spec)?;
            let (rows, points) = sweep(&config, axis, &values, &args.scheme, args.trials, seed)?;
            let mut aborted = Vec::new();
            for p in &points {
                let prefix = format!("{}-{}_", axis.as_str(), p.value);
                write_traces(&args.out, &prefix, &p.outcome.results)?;
                aborted.extend(p.outcome.aborted.iter().map(|(t, why)| format!("{}={} trial {t}: {why}", axis.as_str(), p.value)));
            }
            (axis.as_str().to_string(), values, rows, aborted)
        }
        None => {
            let outcome = monte_carlo(&config, &args.scheme, args.trials, seed)?;
            write_traces(&args.out, "", &outcome.results)?;
            let rows = aggregate("none", 0.0, &args.scheme, &outcome);
            let aborted = outcome.aborted.iter().map(|(t, why)| format!("trial {t}: {why}")).collect();
            ("none".to_string(), Vec::new(), rows, aborted)
        }
    };

    write_results_csv(&rows, fs::File::create(args.out.join("results.csv"))?)?;
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        config,
        schemes: args.scheme.iter().map(|s| s.to_string()).collect(),
        sweep_axis: axis_name,
        sweep_values: values,
        trials: args.trials,
        master_seed: seed,
        git_describe: git_describe(),
        wall_clock_s: clock.elapsed().as_secs_f64(),
        started_unix_s: started,
        aborted_trials: aborted,
        notes: default_notes(),
    };
    write_meta(&args.out.join("meta.json"), &meta)?;
    print_summary(&args.out, &rows);
    Ok(())
}

fn print_summary(out: &Path, rows: &[iab_core::experiments::AggregateRow]) {
    for r in rows {
        println!(
            "{}={} {:14} n={:4} sum_rate={:9.2} Mbps (std {:.2})",
            r.axis,
            r.value,
            r.scheme.as_str(),
            r.n,
            r.sum_rate_mean / 1e6,
            r.sum_rate_std / 1e6
        );
    }
    println!("wrote {}", out.display());
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
    }
}
