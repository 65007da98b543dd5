mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::CliConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "motionplan",
    version,
    about = "Trajectory planning, conditioning and evaluation tools"
)]
pub struct Cli {
    /// Config file (JSON, or TOML when the name ends in .toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print results as a single JSON document.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a manifest into an MVOL motion volume.
    Rasterize {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Defaults to the manifest height.
        #[arg(long)]
        height: Option<usize>,
        /// Defaults to the manifest width.
        #[arg(long)]
        width: Option<usize>,
        /// Also write one grayscale PNG per frame here.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Corrupt every track of a manifest according to its confidence.
    Degrade {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Confidence used for all tracks instead of each track's own.
        #[arg(long)]
        score: Option<f64>,
    },
    /// Draw a manifest's tracks on its image.
    Overlay {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the reasoning and generation loop.
    Reason(ReasonArgs),
    /// Render the stub generator's video as PNG frames.
    Preview {
        #[arg(short, long)]
        input: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// End-point error between a reference manifest and an estimate.
    Epe {
        #[arg(long)]
        reference: PathBuf,
        /// Estimated manifest.
        #[arg(long, conflicts_with = "video", required_unless_present = "video")]
        estimated: Option<PathBuf>,
        /// Directory of PNG frames to track the reference through.
        #[arg(long)]
        video: Option<PathBuf>,
    },
    /// Aggregate a verdict store into preference rates.
    Prefs {
        verdicts: PathBuf,
        #[arg(long, value_enum, default_value_t = PrefsFormat::Text)]
        format: PrefsFormat,
    },
    /// Benchmark tools.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ReasonArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Final trajectory set.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Replace the manifest prompt.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Reply file, or directory of reply files, used instead of a live model.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    /// Write the round history as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Write the last generated video as PNG frames.
    #[arg(long)]
    pub video: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrefsFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Check an index, its manifests and images.
    Validate { root: PathBuf },
    /// Category distribution with exact and rounded percentages.
    Stats { root: PathBuf },
    /// Write a procedurally generated benchmark.
    Synth {
        root: PathBuf,
        /// Items per category: collision, constraint change, tool mechanisms, flow, common objects.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long)]
        multi_object: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub bench_root: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub videos_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.code() as u8);
        }
    };
    let result = CliConfig::resolve(cli.config.as_deref(), |k| std::env::var(k).ok(), cli.seed)
        .and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}
