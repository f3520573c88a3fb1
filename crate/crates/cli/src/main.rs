//! `dlu`: cost reports, gradient/property checks, micro-benchmarks and
//! training demos for the upsampling operators.
//!
//! Exit codes: 0 success, 1 check or tolerance failure, 2 config error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{Format, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dlu",
    version,
    about = "Upsampling operator cost reports, checks, benchmarks and training"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on operator-internal worker threads (falls back to DLU_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated method list, e.g. `carafe,dlu`.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parameter and FLOP accounting per method and grid point.
    Cost,
    /// Finite-difference gradient checks and kernel-space properties.
    Check {
        /// Flip the sign of the named op's analytic gradient.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Wall-clock forward timings.
    Bench {
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Train on the synthetic upsampling task and write the loss curve.
    Train {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        /// Directory for the trained layers.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut run = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        run.out = Some(out.clone());
    }
    if let Some(f) = cli.format {
        run.format = f;
    }
    if let Some(s) = cli.seed {
        run.seed = s;
    }
    if let Some(m) = &cli.methods {
        run.methods = m.iter().filter(|s| !s.is_empty()).cloned().collect();
    }
    run.threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("DLU_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| anyhow::anyhow!("DLU_THREADS=`{v}` is not a count"))?,
            ),
            Err(_) => run.threads,
        },
    };
    match &cli.command {
        Command::Cost => {}
        Command::Check { inject_fault } => {
            if inject_fault.is_some() {
                run.check.fault = inject_fault.clone();
            }
        }
        Command::Bench {
            repetitions,
            warmup,
        } => {
            run.repetitions = repetitions.unwrap_or(run.repetitions);
            run.warmup = warmup.unwrap_or(run.warmup);
        }
        Command::Train {
            method,
            steps,
            params_out,
        } => {
            if let Some(m) = method {
                run.train.method = m.clone();
            }
            run.train.optimizer.steps = steps.unwrap_or(run.train.optimizer.steps);
            if params_out.is_some() {
                run.train.params_out = params_out.clone();
            }
        }
    }
    run.validate()?;
    Ok(run)
}

/// Config-class failures map to exit code 2, everything else to 1.
fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<dlu_core::Error>(),
            Some(
                dlu_core::Error::Config(_)
                    | dlu_core::Error::UnknownMethod(_)
                    | dlu_core::Error::Unsupported { .. }
            )
        )
    })
}

fn execute(cli: &Cli, run: &RunConfig) -> anyhow::Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = run.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;
    pool.install(|| match cli.command {
        Command::Cost => commands::cmd_cost(run),
        Command::Check { .. } => commands::cmd_check(run),
        Command::Bench { .. } => commands::cmd_bench(run),
        Command::Train { .. } => commands::cmd_train(run),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(&cli, &run) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(EXIT_FAILURE),
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
