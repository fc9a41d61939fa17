use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use cascade_kv_cli::config::RunConfig;
use cascade_kv_cli::{bench, simulate, span, verify, viz};

#[derive(Parser)]
#[command(
    name = "cascade-kv",
    about = "Cascading KV cache simulations and benchmarks"
)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run numeric checks at double-precision tolerances.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay retention workloads over a policy/cascade grid and write CSVs.
    Simulate,
    /// Run the oracle verification battery and report per-check results.
    Verify,
    /// Measure cache-op and prefill latency; write a CSV latency table.
    Bench,
    /// Reconstruct attention masks and write PGM images with CSV mirrors.
    Viz,
    /// Print the span / sparsity / expected-accuracy table.
    Span,
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = cli
        .config
        .as_deref()
        .map(RunConfig::load)
        .transpose()?
        .unwrap_or_default();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from(&config.out_dir));
    match cli.command {
        Command::Simulate => {
            simulate::cmd_simulate(&config.simulate, config.seed, &out_dir)?;
            Ok(true)
        }
        Command::Verify => {
            let outcomes = verify::run_all(config.seed, cli.strict);
            let mut all_passed = true;
            for o in &outcomes {
                let status = if o.passed { "PASS" } else { "FAIL" };
                println!(
                    "[{status}] {} (tolerance: {}) — {}",
                    o.name, o.tolerance, o.detail
                );
                all_passed &= o.passed;
            }
            println!(
                "{} of {} checks passed{}",
                outcomes.iter().filter(|o| o.passed).count(),
                outcomes.len(),
                if cli.strict { " (strict)" } else { "" }
            );
            Ok(all_passed)
        }
        Command::Bench => {
            bench::cmd_bench(&config.bench, config.seed, &out_dir)?;
            Ok(true)
        }
        Command::Viz => {
            viz::cmd_viz(&config.viz, config.seed, &out_dir)?;
            Ok(true)
        }
        Command::Span => {
            span::cmd_span(&config.span, &out_dir)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
