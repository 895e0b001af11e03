use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;

/// Scale- and rotation-equivariant convolution toolkit.
///
/// Every subcommand reads an optional JSON config and then applies
/// `--key.path=value` overrides, e.g. `--train.epochs=3`.
#[derive(Debug, Parser)]
#[command(name = "sren", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the filter basis, dump atoms and check analysis/synthesis.
    Basis(Common),
    /// Estimate scale and orientation fields of an image (SRTN or PGM).
    Geometry {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the equivariance protocol and write per-layer errors.
    Equivcheck(Common),
    /// Train a classifier on the undistorted training subset.
    Train(Common),
    /// Evaluate a saved model on a (possibly distorted) test subset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Accuracy under fixed test-set rotations and scalings.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a distorted test subset with previews.
    Gendata(Common),
}

const OWN_FLAGS: [&str; 3] = ["config", "image", "model"];

/// Splits `--key=value` config overrides from the arguments clap handles.
fn split_overrides(args: impl IntoIterator<Item = String>) -> (Vec<String>, Vec<String>) {
    args.into_iter().partition(|a| {
        a.strip_prefix("--")
            .and_then(|body| body.split_once('='))
            .is_some_and(|(key, _)| !OWN_FLAGS.contains(&key))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (overrides, args) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    let load = |common: &Common| RunConfig::load(common.config.as_deref(), &overrides);
    let result = match &cli.command {
        Command::Basis(c) => load(c).and_then(|cfg| commands::basis(&cfg)),
        Command::Geometry { image, common } => {
            load(common).and_then(|cfg| commands::geometry(&cfg, image))
        }
        Command::Equivcheck(c) => load(c).and_then(|cfg| commands::equivcheck(&cfg)),
        Command::Train(c) => load(c).and_then(|cfg| commands::train(&cfg)),
        Command::Eval { model, common } => load(common).and_then(|cfg| commands::eval(&cfg, model)),
        Command::Sweep { model, common } => {
            load(common).and_then(|cfg| commands::sweep(&cfg, model))
        }
        Command::Gendata(c) => load(c).and_then(|cfg| commands::gendata(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
