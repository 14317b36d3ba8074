//! `styler`: stylize images, train a model, or evaluate a checkpoint.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.

mod eval;
mod stylize;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use styler_core::{Arch, StylerError, VggWeights};

#[derive(Parser)]
#[command(name = "styler", version, about = "Arbitrary style transfer with affinity-enhanced attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stylize every (content, style) pair from two files or folders.
    Stylize(stylize::StylizeArgs),
    /// Train a model from a TOML config, with flag overrides.
    Train(train::TrainArgs),
    /// Score a checkpoint on sampled (content, style) pairs.
    Eval(eval::EvalArgs),
}

/// Where the frozen VGG-19 encoder weights come from.
#[derive(Args, Debug)]
pub struct VggSource {
    /// VGG-19 weights as safetensors with torchvision `features.N` names
    /// converted to `conv1_1.weight` style; see the README.
    #[arg(long, env = "STYLER_VGG")]
    vgg: Option<PathBuf>,
    /// Use seeded random encoder weights instead of a weights file (testing only).
    #[arg(long)]
    synthetic_vgg_seed: Option<u64>,
}

impl VggSource {
    pub fn load(&self, arch: Arch) -> Result<VggWeights, Failure> {
        match (self.synthetic_vgg_seed, &self.vgg) {
            (Some(seed), _) => Ok(VggWeights::synthetic(arch, seed)),
            (None, Some(path)) => Ok(VggWeights::load_with_arch(path, arch)?),
            (None, None) => Err(Failure::Usage("no encoder weights: pass --vgg, set STYLER_VGG or pass --synthetic-vgg-seed".into())),
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<StylerError> for Failure {
    fn from(e: StylerError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stylize(args) => stylize::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
