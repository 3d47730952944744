use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use spreadcast::config::RunConfig;
use spreadcast::fetch::{fetch_gkg_files, FetchOptions, DEFAULT_BASE_URL};
use spreadcast::pipeline::{self, FamilyFilter, RunLayout};
use spreadcast::synth::{self, SynthConfig};
use spreadcast::variants::Family;
use spreadcast::{Error, Result};

/// Probabilistic forecasting of the Italian-German 10-year spread with news
/// covariates.
#[derive(Debug, Parser)]
#[command(name = "spreadcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, filter and aggregate GKG files into daily feature counts.
    Ingest(Common),
    /// Apply the feature funnel to the daily counts.
    Select(Common),
    /// Fit Nelson-Siegel factors and build the forecasting target.
    Factors(Common),
    /// Cluster and project the selected news features.
    Reduce(Common),
    /// Train each DeepAR model once on the estimation window.
    Train(Common),
    /// Rolling DeepAR forecasts over the out-of-sample period.
    Forecast(Common),
    /// Rolling gradient-boosting forecasts over the out-of-sample period.
    Gbm(Common),
    /// Score saved forecasts: loss tables, DM and fluctuation tests, SHAP.
    Evaluate(Common),
    /// Run every enabled stage and write a manifest.
    Run(Common),
    /// Download GKG archives for a date range.
    Fetch {
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        /// Destination directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
    },
    /// Write a synthetic dataset (calendar, yields, outlets, GKG files).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
        /// Number of trading days.
        #[arg(long, default_value_t = SynthConfig::default().n_days)]
        days: usize,
    },
}

fn load(common: &Common) -> Result<(RunConfig, RunLayout)> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no run directory: pass --out or set output_dir".into()))?;
    Ok((cfg, RunLayout::new(out)))
}

fn stage(common: &Common, name: &str) -> Result<()> {
    let (cfg, layout) = load(common)?;
    cfg.validate()?;
    let written = pipeline::run_stage(name, &cfg, &layout)?;
    log::info!("{name}: wrote {} files under {}", written.len(), layout.root.display());
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(c) => stage(&c, "ingest"),
        Command::Select(c) => stage(&c, "select"),
        Command::Factors(c) => stage(&c, "factors"),
        Command::Reduce(c) => stage(&c, "reduce"),
        Command::Evaluate(c) => stage(&c, "evaluate"),
        Command::Train(c) => {
            let (cfg, layout) = load(&c)?;
            cfg.validate()?;
            pipeline::run_training(&cfg, &layout).map(|_| ())
        }
        Command::Forecast(c) => {
            let (cfg, layout) = load(&c)?;
            cfg.validate()?;
            pipeline::run_forecasts(&cfg, &layout, FamilyFilter::Only(Family::DeepAR)).map(|_| ())
        }
        Command::Gbm(c) => {
            let (cfg, layout) = load(&c)?;
            cfg.validate()?;
            pipeline::run_forecasts(&cfg, &layout, FamilyFilter::Only(Family::GB)).map(|_| ())
        }
        Command::Run(c) => {
            let (cfg, layout) = load(&c)?;
            let manifest = pipeline::run_pipeline(&cfg, &layout.root)?;
            let secs: f64 = manifest.stages.iter().map(|s| s.seconds).sum();
            log::info!("run {} finished in {secs:.1} s", manifest.run_id);
            Ok(())
        }
        Command::Fetch {
            from,
            to,
            out,
            base_url,
        } => {
            let report = fetch_gkg_files(&base_url, from, to, &out, &FetchOptions::default())?;
            log::info!(
                "{} downloaded, {} cached, {} not published, {} corrupt",
                report.downloaded,
                report.cached,
                report.not_published.len(),
                report.corrupt.len()
            );
            report.into_result().map(|_| ())
        }
        Command::Synth { out, seed, days } => {
            let cfg = SynthConfig {
                seed,
                n_days: days,
                ..SynthConfig::default()
            };
            let ds = synth::generate(&cfg)?;
            let written = synth::write_dataset(&ds, &out)?;
            log::info!("wrote {} files to {}", written.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
