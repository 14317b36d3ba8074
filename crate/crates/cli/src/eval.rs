use std::path::PathBuf;

use clap::{Args, ValueEnum};
use styler_core::eval::{run_eval, EvalOptions};
use styler_core::ssim::SsimMode;
use styler_core::{Checkpoint, EvalReport, Stylizer};

use crate::{Failure, VggSource};

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum SsimModeArg {
    #[default]
    Luminance,
    Rgb,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, env = "STYLER_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long)]
    content_dir: PathBuf,
    #[arg(long)]
    style_dir: PathBuf,
    /// Distinct (content, style) pairs sampled from the Cartesian product.
    #[arg(long, default_value_t = 60)]
    num_pairs: usize,
    /// JSON report path.
    #[arg(long)]
    report: PathBuf,
    /// Inputs are resized to this shorter side and center-cropped square.
    #[arg(long, default_value_t = 512)]
    resolution: usize,
    /// Seed of the pair sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    ssim_mode: SsimModeArg,
    #[command(flatten)]
    vgg: VggSource,
}

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    if args.num_pairs == 0 {
        return Err(Failure::Usage("--num-pairs must be at least 1".into()));
    }
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let vgg = args.vgg.load(checkpoint.model.config.arch)?;
    let stylizer = Stylizer::new(&vgg, &checkpoint.model)?;
    let opts = EvalOptions {
        num_pairs: args.num_pairs,
        resolution: args.resolution,
        seed: args.seed,
        ssim_mode: match args.ssim_mode {
            SsimModeArg::Luminance => SsimMode::Luminance,
            SsimModeArg::Rgb => SsimMode::Rgb,
        },
    };
    let report = run_eval(&stylizer, &vgg, &args.content_dir, &args.style_dir, &opts)?;
    report.write(&args.report)?;
    println!("{}", EvalReport::SUMMARY_HEADER);
    println!("{}", report.summary_row());
    Ok(())
}
