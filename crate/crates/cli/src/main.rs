mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use alens_core::{Error, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Class-competitive attribution refinement and evaluation on synthetic
/// grid images.
#[derive(Debug, Parser)]
#[command(name = "alens", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Disables the chance-level mask of the lens.
    #[arg(long, global = true)]
    pub no_mask: bool,
    /// Comma-separated inverse temperatures, e.g. "1,5,100".
    #[arg(long, global = true, value_name = "LIST")]
    pub scales: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Insertion,
    Deletion,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate grid images, region masks and the matching model.
    GenData,
    /// Attribute one image for several classes and save the stack.
    Attribute {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        /// Comma-separated class ids; defaults to the configured strategy.
        #[arg(long, value_name = "LIST")]
        classes: Option<String>,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Refine one class of a saved stack.
    Refine {
        #[arg(long, value_name = "PATH")]
        stack: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Grid-pointing localization for vanilla and refined maps.
    EvalLoc {
        /// Directory written by gen-data; generated from the config if absent.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Insertion or deletion curves for vanilla and refined maps.
    Curve {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Cascading parameter randomization sanity check.
    Sanity {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Write a saved map as an 8-bit PGM image.
    ExportHeatmap {
        #[arg(long, value_name = "PATH")]
        map: PathBuf,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("ALENS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "ALENS_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map(Error::kind)
    {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numeric) => 4,
        Some(ErrorKind::Data) | None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads()
        .map_err(anyhow::Error::from)
        .and_then(|()| commands::run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
