use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

use settings::SettingFlags;

/// Gaussian-process regression on one-dimensional distributions.
#[derive(Debug, Parser)]
#[command(name = "distgp", version, about)]
struct Cli {
    #[command(flatten)]
    settings: SettingFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// W₂ distance between the distributions in two single-observation files
    Distance { a: PathBuf, b: PathBuf },
    /// Fit a kernel by maximum likelihood and write the model JSON
    Fit {
        /// Samples (obs_id,value) or densities (obs_id,x,f) file
        #[arg(long)]
        inputs: PathBuf,
        /// Targets file (obs_id,y)
        #[arg(long)]
        targets: PathBuf,
        /// Model output path
        #[arg(long)]
        out: PathBuf,
        /// Fit summary output path; printed to stdout when omitted
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Predict mean and sd for each query distribution
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        /// CSV output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation benchmark
    Benchmark {
        #[arg(value_enum)]
        experiment: Experiment,
        /// Directory for report.json, rows.csv and pairs.csv
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a diagnostics suite; exits with 4 if any check fails
    Diagnose {
        #[arg(value_enum)]
        suite: Suite,
        /// JSON report path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Table1,
    Table2,
    Beta,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Negdef,
    Nondegen,
    Identifiability,
}

pub enum Failure {
    Library(distgp::Error),
    Diagnostic(String),
}

impl From<distgp::Error> for Failure {
    fn from(e: distgp::Error) -> Self {
        Failure::Library(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Library(e.into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let settings = cli.settings.resolve()?;
    if settings.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(settings.threads)
            .build_global()
            .map_err(|e| distgp::Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Distance { a, b } => commands::distance(&settings, &a, &b),
        Command::Fit {
            inputs,
            targets,
            out,
            summary,
        } => commands::fit(&settings, &inputs, &targets, &out, summary.as_deref()),
        Command::Predict { model, inputs, out } => commands::predict(&model, &inputs, out.as_deref()),
        Command::Benchmark { experiment, out_dir } => {
            let name = match experiment {
                Experiment::Table1 => "table1",
                Experiment::Table2 => "table2",
                Experiment::Beta => "beta",
            };
            commands::benchmark(&settings, name, out_dir.as_deref())
        }
        Command::Diagnose { suite, out } => {
            let name = match suite {
                Suite::Negdef => "negdef",
                Suite::Nondegen => "nondegen",
                Suite::Identifiability => "identifiability",
            };
            commands::diagnose(&settings, name, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Library(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
        Err(Failure::Diagnostic(msg)) => {
            eprintln!("diagnostic failure: {msg}");
            ExitCode::from(4)
        }
    }
}
