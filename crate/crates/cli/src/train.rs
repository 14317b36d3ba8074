use std::path::PathBuf;

use clap::{Args, ValueEnum};
use styler_core::train::{checkpoint_path, train_with};
use styler_core::{Arch, LdMode, StylerError, TrainConfig};

use crate::{Failure, VggSource};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LdModeArg {
    ExtraPasses,
    PermutedFeatures,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML file with training config fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    content_dir: Option<PathBuf>,
    #[arg(long)]
    style_dir: Option<PathBuf>,
    /// Checkpoints and the training log go here; an existing run resumes.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Shorter side after resizing, before the random crop.
    #[arg(long)]
    resize: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    enable_ld: Option<bool>,
    #[arg(long, value_enum)]
    ld_mode: Option<LdModeArg>,
    /// Iterations between checkpoints; 0 saves only at the end.
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_s: Option<f64>,
    #[arg(long)]
    lambda_id1: Option<f64>,
    #[arg(long)]
    lambda_id2: Option<f64>,
    #[arg(long)]
    lambda_cld: Option<f64>,
    #[arg(long)]
    lambda_sld: Option<f64>,
    /// Channel width of the first encoder block; 64 is the standard VGG-19.
    #[arg(long)]
    base_width: Option<usize>,
    #[arg(long)]
    ha_normalize_value: Option<bool>,
    #[command(flatten)]
    vgg: VggSource,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_toml_file(path).map_err(|e| match e {
                StylerError::Config { .. } => Failure::Usage(format!("{}: {e}", path.display())),
                other => other.into(),
            })?,
            None => TrainConfig::default(),
        };
        set(&mut cfg.content_dir, self.content_dir.clone());
        set(&mut cfg.style_dir, self.style_dir.clone());
        set(&mut cfg.output_dir, self.output_dir.clone());
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.learning_rate, self.learning_rate);
        set(&mut cfg.iterations, self.iterations);
        set(&mut cfg.resize, self.resize);
        set(&mut cfg.crop, self.crop);
        set(&mut cfg.enable_ld, self.enable_ld);
        set(
            &mut cfg.ld_mode,
            self.ld_mode.map(|m| match m {
                LdModeArg::ExtraPasses => LdMode::ExtraPasses,
                LdModeArg::PermutedFeatures => LdMode::PermutedFeatures,
            }),
        );
        set(&mut cfg.checkpoint_every, self.checkpoint_every);
        set(&mut cfg.seed, self.seed);
        let w = &mut cfg.loss_weights;
        set(&mut w.lambda_c, self.lambda_c);
        set(&mut w.lambda_s, self.lambda_s);
        set(&mut w.lambda_id1, self.lambda_id1);
        set(&mut w.lambda_id2, self.lambda_id2);
        set(&mut w.lambda_cld, self.lambda_cld);
        set(&mut w.lambda_sld, self.lambda_sld);
        set(&mut cfg.model.arch, self.base_width.map(|base_width| Arch { base_width }));
        set(&mut cfg.model.ha_normalize_value, self.ha_normalize_value);

        for (path, flag) in [(&cfg.content_dir, "content-dir"), (&cfg.style_dir, "style-dir")] {
            if path.as_os_str().is_empty() {
                return Err(Failure::Usage(format!("missing --{flag} (or its config field)")));
            }
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let cfg = args.config()?;
    let vgg = args.vgg.load(cfg.model.arch)?;
    let checkpoint = train_with(&cfg, &vgg, |rec| {
        let l = &rec.losses;
        log::info!(
            "iteration {}: total {:.4} content {:.4} style {:.4} identity {:.4} ld_content {:.4} ld_style {:.4} ({:.2}s)",
            rec.iteration,
            l.total,
            l.content,
            l.style,
            l.identity,
            l.ld_content,
            l.ld_style,
            rec.step_seconds
        );
    })?;
    println!("{}", checkpoint_path(&cfg.output_dir, checkpoint.iteration).display());
    Ok(())
}
