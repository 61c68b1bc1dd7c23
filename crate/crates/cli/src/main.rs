use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fairstream::harness::{self, resolve_out_dir, RunConfig, Suite};

/// Online fair classification simulator.
#[derive(Parser)]
#[command(name = "fairstream", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.json,
    /// comparator.json and config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides FAIRSTREAM_OUT and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (T, seed, b) combination and write sweep.json and
    /// frontier.dat.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Number of seeds, counting up from the config's seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        b: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an invariant suite and print its report as JSON.
    Verify {
        /// auditing, lemmas, ftpl, comparator, accounting or all.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Suite,
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let config = RunConfig::load(path).map_err(|e| Failure::Config(e.into()))?;
    config.validate().with_context(|| format!("invalid config {}", path.display())).map_err(Failure::Config)?;
    Ok(config)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, out } => {
            let mut config = load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let dir = resolve_out_dir(out.as_deref(), &config);
            let summary = harness::run(&config, &dir)
                .with_context(|| format!("run failed, output dir {}", dir.display()))
                .map_err(Failure::Runtime)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.into()))?);
            Ok(())
        }
        Command::Sweep { config, horizons, seeds, b, out } => {
            let config = load(&config)?;
            if seeds == 0 {
                return Err(Failure::Config(anyhow::anyhow!("--seeds must be at least 1")));
            }
            for &horizon in &horizons {
                for &bv in &b {
                    RunConfig { horizon, b: bv, ..config.clone() }.validate().map_err(|e| Failure::Config(e.into()))?;
                }
            }
            let seed_list: Vec<u64> = (config.seed..config.seed + seeds).collect();
            let dir = resolve_out_dir(out.as_deref(), &config);
            let table = harness::sweep_cached(
                &config,
                &horizons,
                &seed_list,
                &b,
                &mut harness::ComparatorCache::default(),
                |s| {
                    eprintln!(
                        "T={} seed={} b={} regret={:.1} violations={}",
                        s.horizon, s.seed, s.b, s.regret, s.violations
                    )
                },
            )
            .map_err(|e| Failure::Runtime(e.into()))?;
            harness::write_sweep(&table, &dir).map_err(|e| Failure::Runtime(e.into()))?;
            println!("{}", serde_json::to_string_pretty(&table).map_err(|e| Failure::Runtime(e.into()))?);
            Ok(())
        }
        Command::Verify { suite, seed } => {
            let suite: Suite = suite.parse().map_err(|e: fairstream::Error| Failure::Config(e.into()))?;
            let reports = harness::run_suite(suite, seed).map_err(|e| Failure::Runtime(e.into()))?;
            println!("{}", serde_json::to_string_pretty(&reports).map_err(|e| Failure::Runtime(e.into()))?);
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Failure::Suite)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Suite) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}
