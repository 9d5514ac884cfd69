//! Command-line front end. Flags mirror config keys and override the file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::runner::{self, log, validate, ExperimentConfig, OUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "chargelab", version, about = "Charge learnability in monitored noisy symmetric circuits")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `u1xz2` or `u1`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Chain lengths, comma separated.
    #[arg(long = "L", value_delimiter = ',', global = true)]
    pub lengths: Option<Vec<usize>>,
    /// Measurement rates, comma separated.
    #[arg(long = "p", value_delimiter = ',', global = true)]
    pub rates: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub n_records: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub scramble_steps: Option<usize>,
    #[arg(long, env = OUT_ENV, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub cutoff: Option<f64>,
    #[arg(long, global = true)]
    pub max_chi: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one JSONL record file per (L, p).
    Generate,
    /// Decode record files into accuracy, histogram and posterior CSVs.
    Decode {
        /// `optimal` or `noisy`.
        #[arg(long)]
        decoder: Option<String>,
        #[arg(long)]
        hist_bins: Option<usize>,
    },
    /// Rényi-2 correlator experiments.
    Swssb {
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        swssb_max_chi: Option<usize>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Peak bond dimension against system size.
    Scaling {
        #[arg(long = "scaling-n-records")]
        n_records: Option<usize>,
        #[arg(long)]
        sampler_max_chi: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        definitions: Option<Vec<String>>,
    },
    /// Run the dense-oracle cross-check suite.
    Validate,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// File (if any), then flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let c = &cli.common;
    set(&mut cfg.model, c.model.clone());
    set(&mut cfg.lengths, c.lengths.clone());
    set(&mut cfg.rates, c.rates.clone());
    set(&mut cfg.n_records, c.n_records);
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.out_dir, c.out_dir.clone());
    set(&mut cfg.workers, c.workers);
    set(&mut cfg.truncation.cutoff, c.cutoff);
    if c.scramble_steps.is_some() {
        cfg.scramble_steps = c.scramble_steps;
    }
    if c.max_chi.is_some() {
        cfg.truncation.max_chi = c.max_chi;
    }
    match &cli.command {
        Command::Decode { decoder, hist_bins } => {
            set(&mut cfg.decode.decoder, decoder.clone());
            set(&mut cfg.decode.hist_bins, *hist_bins);
        }
        Command::Swssb { n_traj, swssb_max_chi, grid_points } => {
            set(&mut cfg.swssb.n_traj, *n_traj);
            set(&mut cfg.swssb.max_chi, *swssb_max_chi);
            set(&mut cfg.swssb.grid_points, *grid_points);
        }
        Command::Scaling { n_records, sampler_max_chi, definitions } => {
            set(&mut cfg.scaling.n_records, *n_records);
            set(&mut cfg.scaling.sampler_max_chi, *sampler_max_chi);
            set(&mut cfg.scaling.definitions, definitions.clone());
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Generate => {
            runner::cmd_generate(&cfg)?;
        }
        Command::Decode { .. } => {
            runner::cmd_decode(&cfg)?;
        }
        Command::Swssb { .. } => {
            runner::cmd_swssb(&cfg)?;
        }
        Command::Scaling { .. } => {
            runner::cmd_scaling(&cfg)?;
        }
        Command::Validate => {
            validate::cmd_validate(&cfg)?;
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidPolicy(_) | Error::InvalidRate(_) | Error::InvalidLength(_) => 2,
        _ => 1,
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::event("error", &[("message", e.to_string().into())]);
            exit_code(&e)
        }
    }
}
