//! `flameguide` command-line tool.
//!
//! Exit status: 0 success, 2 usage error, 3 invalid input, 4 I/O failure.

mod commands;
mod error;
mod manifest;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flameguide", version, about = "FLAME-driven motion guidance pipeline")]
struct Cli {
    /// Root for default output locations.
    #[arg(long, global = true, env = "FLAMEGUIDE_OUT", default_value = "flameguide-out")]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic head model, sample parameters and encoder weights.
    GenTestAssets(commands::GenArgs),
    /// Combine an identity's shape with a driving sequence's motion.
    Align(commands::AlignArgs),
    /// Rasterize depth, normal and shaded guidance PNGs for every frame.
    Render(commands::RenderArgs),
    /// Run the guidance encoder over rendered maps.
    Encode(commands::EncodeArgs),
    /// Blend per-window tensors back into one sequence.
    Stitch(commands::StitchArgs),
    /// Run the toy diffusion sampler and write its trace.
    DemoDiffuse(commands::DiffuseArgs),
}

/// Output options shared by every command.
#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory (defaults to a command-specific folder under the output root).
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Replace an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl OutputArgs {
    pub fn resolve(&self, root: &std::path::Path, default_name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| root.join(default_name))
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let root = cli.out_root;
    match cli.command {
        Command::GenTestAssets(args) => commands::gen_test_assets(&root, args),
        Command::Align(args) => commands::align(&root, args),
        Command::Render(args) => commands::render(&root, args),
        Command::Encode(args) => commands::encode(&root, args),
        Command::Stitch(args) => commands::stitch(&root, args),
        Command::DemoDiffuse(args) => commands::demo_diffuse(&root, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
