//! `rhs-sim`: run throughput sweeps and summarize their CSV output.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rhs_core::harness::{
    parse_config, read_csv, run_sweep, summarize, write_csv, write_csv_to, SummaryRow,
};

#[derive(Parser)]
#[command(
    name = "rhs-sim",
    version,
    about = "Shape-adaptive multi-surface beamforming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; written to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scheme list, e.g. `adaptive,fixed,quantized-2bit,zf_random`.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        trials: Option<usize>,
        /// Suppress the summary table and progress logging.
        #[arg(long)]
        quiet: bool,
    },
    /// Print mean and standard error per (scheme, p_max) from a sweep CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn print_table(out: &mut impl Write, table: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<18} {:>10} {:>6} {:>14} {:>14} {:>8}",
        "scheme", "p_max_dbm", "n", "mean", "stderr", "failed"
    )?;
    for r in table {
        writeln!(
            out,
            "{:<18} {:>10.2} {:>6} {:>14.6e} {:>14.6e} {:>8}",
            r.scheme, r.p_max_dbm, r.n, r.mean, r.stderr, r.failures
        )?;
    }
    Ok(())
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    schemes: Option<Vec<String>>,
    trials: Option<usize>,
    quiet: bool,
) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&config)
        .with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(names) = schemes {
        cfg.set_schemes(&names).context("--schemes")?;
    }
    if let Some(t) = trials {
        if t == 0 {
            bail!("--trials must be at least 1");
        }
        cfg.trials = t;
    }
    log::info!(
        "{} schemes x {} power points x {} trials",
        cfg.schemes.len(),
        cfg.p_max_dbm.len(),
        cfg.trials
    );

    let result = run_sweep(&cfg)?;
    match &out {
        Some(path) => {
            write_csv(&result, path).with_context(|| format!("writing {}", path.display()))?
        }
        None => write_csv_to(&result, std::io::stdout().lock())?,
    }
    if !quiet {
        print_table(&mut std::io::stderr().lock(), &summarize(&result)?)?;
    }
    let failed = result.failures();
    if failed > 0 {
        bail!(
            "{failed} of {} rows failed; see the `error` rows in the output",
            result.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = matches!(cli.command, Command::Run { quiet: true, .. });
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if quiet {
        "error"
    } else {
        "info"
    }))
    .init();

    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            schemes,
            trials,
            quiet,
        } => run(config, out, seed, schemes, trials, quiet),
        Command::Summarize { input } => read_csv(&input)
            .with_context(|| format!("reading {}", input.display()))
            .and_then(|res| Ok(summarize(&res)?))
            .and_then(|table| Ok(print_table(&mut std::io::stdout().lock(), &table)?)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
