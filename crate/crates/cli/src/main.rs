use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ctxrand::bounds::BoundKind;
use ctxrand_cli::commands::{self, Curve, ExtractArgs, Grid, Status};
use ctxrand_cli::config::{Config, Preset};
use ctxrand_cli::{error_exit_code, InputError};

/// Contextuality-certified randomness expansion: simulate, certify, extract
/// and test.
#[derive(Parser)]
#[command(name = "ctxrand", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seeds.master`).
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Min-entropy bound: ms or hs.
    #[arg(long, global = true)]
    bound: Option<BoundKind>,
    /// Smoothing parameter of the bound.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Output directory (or file for `sweep`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol against a simulated qutrit; write the trial log,
    /// score report and raw streams.
    Simulate {
        #[arg(long)]
        n_rounds: Option<u64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Score a trial log and certify its min-entropy.
    Certify {
        log: PathBuf,
        /// Protocol size to certify at (default: log length).
        #[arg(long)]
        n_rounds: Option<f64>,
        /// Spot-check rate to certify at (default: observed game fraction).
        #[arg(long)]
        q: Option<f64>,
    },
    /// Simulate, gate on the score, certify, extract and test.
    Expand {
        #[arg(long)]
        n_rounds: Option<u64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Hash a `.bits` file with a Toeplitz matrix.
    Extract {
        input: PathBuf,
        #[arg(long)]
        n_out: Option<usize>,
        /// Total min-entropy of the input; sets the output length.
        #[arg(long)]
        min_entropy: Option<f64>,
        /// Toeplitz seed as a `.bits` file; derived from `seeds.extractor` otherwise.
        #[arg(long)]
        seed_file: Option<PathBuf>,
    },
    /// Run the statistical battery on a `.bits` file.
    Test {
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        csv: bool,
    },
    /// Emit rate surfaces or minimum-round curves as CSV.
    Sweep {
        #[arg(long, value_enum, default_value = "surface")]
        curve: Curve,
        #[arg(long, default_value_t = 0.70)]
        g_min: f64,
        #[arg(long, default_value_t = 0.83)]
        g_max: f64,
        #[arg(long, default_value_t = 14)]
        g_steps: usize,
        #[arg(long, default_value_t = 1e-6)]
        q_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        q_max: f64,
        #[arg(long, default_value_t = 26)]
        q_steps: usize,
        #[arg(long, default_value_t = 1.29421072e8)]
        n_rounds: f64,
    },
    /// Re-score a trial log, or re-run a manifest and compare digests.
    Replay {
        input: PathBuf,
        /// Treat INPUT as a run manifest.
        #[arg(long)]
        manifest: bool,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).context(InputError)?,
        None => Config::default(),
    };
    if let Some(s) = &cli.seed {
        config.seeds.master = s.clone();
    }
    if let Some(p) = cli.preset {
        config.preset = p;
    }
    if let Some(b) = cli.bound {
        config.bound = b;
    }
    if let Some(d) = cli.delta {
        config.delta = d;
    }
    Ok(config)
}

fn with_size(mut config: Config, n_rounds: Option<u64>, q: Option<f64>) -> Result<Config> {
    config.n_rounds = n_rounds.unwrap_or(config.n_rounds);
    config.q = q.unwrap_or(config.q);
    config.validate().context(InputError)?;
    Ok(config)
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
        #[cfg(not(feature = "parallel"))]
        let _ = n;
    }
    let config = load_config(&cli)?;
    let out_dir = cli.out_dir.clone();
    let run_dir = || out_dir.clone().unwrap_or_else(|| PathBuf::from("ctxrand-out"));
    match &cli.command {
        Command::Simulate { n_rounds, q } => commands::simulate(&with_size(config, *n_rounds, *q)?, &run_dir()),
        Command::Expand { n_rounds, q } => commands::expand(&with_size(config, *n_rounds, *q)?, &run_dir()),
        Command::Certify { log, n_rounds, q } => {
            config.validate().context(InputError)?;
            commands::certify(log, *n_rounds, *q, &config, out_dir.as_deref())
        }
        Command::Extract {
            input,
            n_out,
            min_entropy,
            seed_file,
        } => {
            let args = ExtractArgs {
                input,
                n_out: *n_out,
                min_entropy: *min_entropy,
                seed_file: seed_file.as_deref(),
            };
            commands::extract(&args, &config, &run_dir())
        }
        Command::Test { input, threshold, csv } => {
            let threshold = threshold.unwrap_or(config.extract.threshold);
            commands::test(input, threshold, *csv, out_dir.as_deref())
        }
        Command::Sweep {
            curve,
            g_min,
            g_max,
            g_steps,
            q_min,
            q_max,
            q_steps,
            n_rounds,
        } => {
            config.validate().context(InputError)?;
            let gs = Grid {
                min: *g_min,
                max: *g_max,
                steps: *g_steps,
            };
            let qs = Grid {
                min: *q_min,
                max: *q_max,
                steps: *q_steps,
            };
            commands::sweep(*curve, &gs, &qs, *n_rounds, &config, out_dir.as_deref())
        }
        Command::Replay { input, manifest } => {
            if *manifest {
                commands::replay_manifest(input, &run_dir())
            } else {
                commands::replay(input, &config)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
