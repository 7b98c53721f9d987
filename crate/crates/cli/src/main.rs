use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fuzzstoch_cli::{init_threads, load_config, CliError, Pipeline};

#[derive(Parser)]
#[command(name = "fuzzstoch", version, about = "Fuzzy-stochastic composite modelling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to FUZZSTOCH_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic fiber map and rasterize it.
    Synth,
    /// Cut the binary map into 1D compliance samples.
    Extract,
    /// Resample the extracted samples to the configured length.
    Bootstrap,
    /// Pointwise moments and correlation curves.
    Stats,
    /// Fuzzy moments from moment histograms.
    Fuzzify,
    /// KL basis and fuzzy-stochastic field summary.
    FitField,
    /// Local validation bands, truth p-box and containment.
    ValidateLocal,
    /// RVE scatter curve and length.
    Rve,
    /// Global-local validation bands and containment.
    GlobalLocal,
    /// All stages in order.
    Run,
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    fn stage(self) -> Option<&'static str> {
        Some(match self {
            Command::Synth => "synth",
            Command::Extract => "extract",
            Command::Bootstrap => "bootstrap",
            Command::Stats => "stats",
            Command::Fuzzify => "fuzzify",
            Command::FitField => "fit-field",
            Command::ValidateLocal => "validate-local",
            Command::Rve => "rve",
            Command::GlobalLocal => "global-local",
            Command::Run | Command::Config => return None,
        })
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let mut p = Pipeline::new(cfg, &cli.out)?;
    match cli.command.stage() {
        Some(stage) => p.run_stage(stage),
        None => p.run_all(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
