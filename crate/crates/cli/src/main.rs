mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use commscore::embedding::SIDECAR_ENDPOINT_ENV;

use config::{FileConfig, OutputFormat, Overrides, ProviderKind, RunConfig};
use error::CliError;

/// Scores duplicate and parasite communications in game voice transcripts.
#[derive(Parser)]
#[command(name = "commscore", version)]
struct Cli {
    /// TOML config file. Defaults to ./commscore.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a transcript and write the report.
    Analyze {
        transcript: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a transcript and compare the flags against labels.
    Evaluate {
        transcript: PathBuf,
        labels: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render one speaker's interference heatmap.
    Heatmap {
        transcript: PathBuf,
        #[arg(long)]
        speaker: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the resolved configuration as TOML.
    PrintConfig {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Duplicate window in seconds.
    #[arg(long, value_name = "SECONDS")]
    window: Option<f64>,
    #[arg(long, value_name = "T")]
    duplicate_threshold: Option<f64>,
    #[arg(long, value_name = "T")]
    parasite_threshold: Option<f64>,
    /// Sets both thresholds unless the specific flag is given.
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,
    /// Phrasing lexicon, one phrasing per line.
    #[arg(long, value_name = "PATH")]
    lexicon: Option<PathBuf>,
    #[arg(long, value_enum)]
    provider: Option<ProviderKind>,
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Option<Vec<OutputFormat>>,
    #[arg(long, conflicts_with = "refinement")]
    no_refinement: bool,
    #[arg(long)]
    refinement: bool,
    #[arg(long, value_name = "N")]
    max_target_tokens: Option<usize>,
    #[arg(long, value_name = "SECONDS")]
    context_window: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            window_s: self.window,
            duplicate_threshold: self.duplicate_threshold,
            parasite_threshold: self.parasite_threshold,
            threshold: self.threshold,
            lexicon: self.lexicon.clone(),
            provider: self.provider,
            endpoint: self.endpoint.clone(),
            cache_dir: self.cache_dir.clone(),
            out: self.out.clone(),
            formats: self.format.clone(),
            refinement: match (self.refinement, self.no_refinement) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            },
            max_target_tokens: self.max_target_tokens,
            context_window_s: self.context_window,
        }
    }
}

fn resolve(config: Option<PathBuf>, run: &RunArgs) -> Result<RunConfig, CliError> {
    let file = match config.or_else(commands::default_config_path) {
        Some(path) => FileConfig::load(&path)?,
        None => FileConfig::default(),
    };
    let env = std::env::var(SIDECAR_ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
    RunConfig::resolve(&file, env, &run.overrides())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { transcript, run } => {
            let cfg = resolve(cli.config, &run)?;
            print!("{}", commands::analyze_cmd(&transcript, &cfg)?);
        }
        Command::Evaluate {
            transcript,
            labels,
            run,
        } => {
            let cfg = resolve(cli.config, &run)?;
            let (eval, written) = commands::evaluate_cmd(&transcript, &labels, &cfg)?;
            print!("{}{written}", commands::metrics_text(&eval));
        }
        Command::Heatmap {
            transcript,
            speaker,
            run,
        } => {
            let cfg = resolve(cli.config, &run)?;
            print!("{}", commands::heatmap_cmd(&transcript, &speaker, &cfg)?);
        }
        Command::PrintConfig { run } => {
            print!("{}", resolve(cli.config, &run)?.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("commscore: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
