//! Command-line front end: `forecast`, `backtest` and `inspect`.
//!
//! Settings come from built-in defaults, then an optional `--config` file,
//! then command-line flags. Every command writes its files atomically into
//! the output directory together with `manifest.txt`, which echoes the
//! resolved configuration and can be passed back as `--config`.

pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mtlf_core::dataset::{load_corpus, Corpus, MONTHS_PER_YEAR};
use mtlf_core::metrics::EvalReport;
use mtlf_core::pipeline::{decompose, run_pipeline, PipelineOutput};

pub use config::CliConfig;
pub use error::CliError;
use output::{csv_bytes, ensure_dir, Written};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.txt";
pub const FORECASTS: &str = "forecasts.csv";
pub const METRICS: &str = "metrics.csv";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const BASELINE_METRICS: &str = "baseline_metrics.csv";
/// Files written by `inspect`, in preprocessing order.
pub const INSPECT_FILES: [&str; 6] = ["z.csv", "zbar.csv", "sigma.csv", "y.csv", "s.csv", "x.csv"];

#[derive(Debug, Parser)]
#[command(
    name = "mtlf",
    version,
    about = "Monthly electricity demand forecasting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forecast the year after the data (holdout defaults to 0).
    Forecast(CommonArgs),
    /// Withhold trailing years, forecast the first of them and score it
    /// (holdout defaults to 1).
    Backtest(CommonArgs),
    /// Dump the preprocessing stages of one series.
    Inspect {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        series: String,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input CSV with header `series_id,year,month,value`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key = value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub holdout_years: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub state_size: Option<usize>,
    #[arg(long)]
    pub snapshots: Option<usize>,
    #[arg(long)]
    pub subsets: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub coverage: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<CliConfig, CliError> {
        let mut config = CliConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            config
                .merge_kv(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        }
        if let Some(v) = &self.data {
            config.data_path = Some(v.clone());
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
        if let Some(v) = self.threads {
            config.threads = Some(v);
        }
        if let Some(v) = self.holdout_years {
            config.holdout_years = Some(v);
        }
        macro_rules! apply {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { config.$field = v; })*
            };
        }
        apply!(seed => seed, epochs => epochs, lr => learning_rate, tau => tau,
            state_size => state_size, snapshots => snapshots, subsets => subsets,
            runs => runs, coverage => coverage);
        config.verbosity = config.verbosity.max(self.verbose);
        Ok(config)
    }
}

/// What a command wrote.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: Option<EvalReport>,
    pub baseline: Option<EvalReport>,
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?
            .install(f),
    }
}

fn load(config: &CliConfig) -> Result<Corpus, CliError> {
    let path = config
        .data_path
        .as_ref()
        .ok_or_else(|| CliError::Config("no data file given (--data or `data =`)".into()))?;
    Ok(load_corpus(path)?)
}

fn manifest(
    command: &str,
    config: &CliConfig,
    holdout: Option<usize>,
    series: usize,
    seconds: f64,
) -> String {
    let mut echo = config.clone();
    echo.holdout_years = holdout;
    format!(
        "# mtlf {VERSION}\n# command = {command}\n# series = {series}\n# wall_time_s = {seconds:.3}\n{}",
        echo.to_kv()
    )
}

fn forecasts_csv(out: &PipelineOutput) -> Result<Vec<u8>, CliError> {
    let rows = out.forecasts.iter().flat_map(|f| {
        f.forecast.iter().enumerate().map(move |(j, v)| {
            vec![
                f.series_id.clone(),
                f.forecast_year.to_string(),
                (j + 1).to_string(),
                v.to_string(),
            ]
        })
    });
    csv_bytes(&["series_id", "year", "month", "forecast"], rows)
}

fn run(command: &str, config: &CliConfig, default_holdout: usize) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let pipeline = config.pipeline(default_holdout);
    if command == "backtest" && pipeline.holdout_years == 0 {
        return Err(CliError::Config("backtest needs holdout_years >= 1".into()));
    }
    let corpus = load(config)?;
    log::info!("loaded {} series", corpus.len());
    let out = with_threads(config.threads, || Ok(run_pipeline(&corpus, &pipeline)?))?;
    let flagged: Vec<&str> = out
        .forecasts
        .iter()
        .filter(|f| !f.positive)
        .map(|f| f.series_id.as_str())
        .collect();
    if !flagged.is_empty() {
        log::warn!("non-positive forecast months for: {}", flagged.join(", "));
    }

    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut written = Written::default();
    written.file(dir, FORECASTS, &forecasts_csv(&out)?)?;
    if let (Some(report), Some(baseline)) = (&out.report, &out.baseline_report) {
        written.file(dir, METRICS, report.to_csv().as_bytes())?;
        written.file(dir, METRICS_TABLE, report.to_table().as_bytes())?;
        written.file(dir, BASELINE_METRICS, baseline.to_csv().as_bytes())?;
    }
    let text = manifest(
        command,
        config,
        Some(pipeline.holdout_years),
        corpus.len(),
        start.elapsed().as_secs_f64(),
    );
    written.file(dir, MANIFEST, text.as_bytes())?;
    Ok(Outcome {
        files: written.0,
        report: out.report,
        baseline: out.baseline_report,
    })
}

pub fn cmd_forecast(config: &CliConfig) -> Result<Outcome, CliError> {
    run("forecast", config, 0)
}

pub fn cmd_backtest(config: &CliConfig) -> Result<Outcome, CliError> {
    run("backtest", config, 1)
}

/// Writes the raw series `z`, yearly means and dispersions, the normalized
/// series `y`, the seasonal components `s` (including the forecast year)
/// and the deseasonalized series `x`.
pub fn cmd_inspect(config: &CliConfig, series_id: &str) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let corpus = load(config)?;
    let series = corpus
        .get(series_id)
        .ok_or_else(|| CliError::Data(format!("unknown series id '{series_id}'")))?;
    let d = decompose(series)?;
    let year0 = series.start_year;

    let monthly = |values: &[f64]| {
        let rows = values.iter().enumerate().map(|(t, v)| {
            vec![
                (year0 + (t / MONTHS_PER_YEAR) as i32).to_string(),
                (t % MONTHS_PER_YEAR + 1).to_string(),
                v.to_string(),
            ]
        });
        csv_bytes(&["year", "month", "value"], rows)
    };
    let yearly = |values: &[f64]| {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(year0 + i as i32).to_string(), v.to_string()]);
        csv_bytes(&["year", "value"], rows)
    };
    let contents = [
        monthly(series.values())?,
        yearly(&d.stats.means)?,
        yearly(&d.stats.dispersions)?,
        monthly(&d.normalized)?,
        monthly(&d.seasonal)?,
        monthly(&d.deseasonalized)?,
    ];

    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut written = Written::default();
    for (name, bytes) in INSPECT_FILES.iter().zip(&contents) {
        written.file(dir, name, bytes)?;
    }
    let text = manifest(
        &format!("inspect {series_id}"),
        config,
        config.holdout_years,
        1,
        start.elapsed().as_secs_f64(),
    );
    written.file(dir, MANIFEST, text.as_bytes())?;
    Ok(Outcome {
        files: written.0,
        report: None,
        baseline: None,
    })
}

/// Resolves the settings and runs one parsed command.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Forecast(args) => cmd_forecast(&args.resolve()?),
        Command::Backtest(args) => cmd_backtest(&args.resolve()?),
        Command::Inspect { common, series } => cmd_inspect(&common.resolve()?, series),
    }
}

pub fn verbosity(command: &Command) -> u8 {
    let common = match command {
        Command::Forecast(a) | Command::Backtest(a) => a,
        Command::Inspect { common, .. } => common,
    };
    common
        .resolve()
        .map(|c| c.verbosity)
        .unwrap_or(common.verbose)
}
