//! Quantitative protocol: content and style discrepancy, SSIM and timing.

use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImageFolder;
use crate::error::{Result, StylerError};
use crate::fsutil::write_bytes_atomic;
use crate::image::Image;
use crate::losses::{content_loss, style_loss, CONTENT_LAYERS, STYLE_LAYERS};
use crate::model::Stylizer;
use crate::ssim::{ssim_with, SsimMode};
use crate::vgg::VggWeights;

/// Untimed stylize calls made before any timed one.
pub const WARMUP_CALLS: usize = 2;

/// Anything that maps a content/style pair to a stylized image.
pub trait StyleModel {
    fn stylize_pair(&self, content: &Image, style: &Image) -> Result<Image>;
}

impl StyleModel for Stylizer<'_> {
    fn stylize_pair(&self, content: &Image, style: &Image) -> Result<Image> {
        self.stylize(content, style, 1.0)
    }
}

/// Content discrepancy between a content image and its stylization.
pub fn metric_content(content: &Image, stylized: &Image, vgg: &VggWeights) -> Result<f64> {
    if (content.width(), content.height()) != (stylized.width(), stylized.height()) {
        return Err(StylerError::Dimension(format!(
            "content is {}×{} but stylized output is {}×{}",
            content.width(),
            content.height(),
            stylized.width(),
            stylized.height()
        )));
    }
    let loss = content_loss(&vgg.encode(content)?, &vgg.encode(stylized)?, &CONTENT_LAYERS)?;
    Ok(f64::from(loss.value().item()?))
}

/// Style discrepancy between a style image and a stylization; sizes may differ.
pub fn metric_style(style: &Image, stylized: &Image, vgg: &VggWeights) -> Result<f64> {
    let loss = style_loss(&vgg.encode(style)?, &vgg.encode(stylized)?, &STYLE_LAYERS)?;
    Ok(f64::from(loss.value().item()?))
}

/// Resize so the shorter side is `resolution`, then center-crop a square.
pub fn prepare(img: &Image, resolution: usize) -> Result<Image> {
    img.resize_shorter_side(resolution)?.center_crop(resolution, resolution)
}

/// Mean seconds per stylize call over `n` calls cycling through `pairs`,
/// after [`WARMUP_CALLS`] untimed calls on the first pair. Inputs are
/// already decoded, so only the model is timed.
pub fn benchmark_timing(model: &dyn StyleModel, pairs: &[(Image, Image)], n: usize) -> Result<f64> {
    if n == 0 || pairs.is_empty() {
        return Err(StylerError::Argument("timing needs at least one call and one pair".into()));
    }
    for _ in 0..WARMUP_CALLS {
        model.stylize_pair(&pairs[0].0, &pairs[0].1)?;
    }
    let started = Instant::now();
    for i in 0..n {
        let (c, s) = &pairs[i % pairs.len()];
        model.stylize_pair(c, s)?;
    }
    Ok(started.elapsed().as_secs_f64() / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub num_pairs: usize,
    pub resolution: usize,
    pub seed: u64,
    pub ssim_mode: SsimMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { num_pairs: 60, resolution: 512, seed: 0, ssim_mode: SsimMode::Luminance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub content: String,
    pub style: String,
    pub content_loss: f64,
    pub style_loss: f64,
    pub ssim: f64,
    pub time_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_content_loss: f64,
    pub mean_style_loss: f64,
    pub mean_ssim: f64,
    pub mean_time_seconds: f64,
    pub num_pairs: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Images compared by SSIM.
    pub ssim_pairing: String,
    pub ssim_mode: SsimMode,
    pub warmup_calls: usize,
    pub environment: Environment,
    pub pairs: Vec<PairRow>,
}

impl EvalReport {
    pub const SUMMARY_HEADER: &'static str = "      L_c       L_s      SSIM  Time/sec";

    /// One aligned row: L_c, L_s, SSIM, Time/sec.
    pub fn summary_row(&self) -> String {
        format!(
            "{:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            self.mean_content_loss, self.mean_style_loss, self.mean_ssim, self.mean_time_seconds
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| StylerError::Argument(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| StylerError::schema("<report>", e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| StylerError::io(path, e))?;
        Self::from_json(&s)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Draws `num_pairs` distinct (content, style) pairs with the seeded
/// generator, stylizes each at α = 1 and aggregates the metrics.
pub fn run_eval(
    model: &dyn StyleModel,
    vgg: &VggWeights,
    content_dir: impl AsRef<Path>,
    style_dir: impl AsRef<Path>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if opts.num_pairs == 0 {
        return Err(StylerError::Argument("num_pairs must be at least 1".into()));
    }
    let contents = ImageFolder::open(content_dir)?;
    let styles = ImageFolder::open(style_dir)?;
    let available = contents.len() * styles.len();
    if opts.num_pairs > available {
        return Err(StylerError::Data(format!(
            "{} pairs requested but the corpora only form {available}",
            opts.num_pairs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picks = sample(&mut rng, available, opts.num_pairs).into_vec();
    picks.sort_unstable();

    let mut prepared = Vec::with_capacity(picks.len());
    for idx in picks {
        let (cp, sp) = (&contents.files()[idx / styles.len()], &styles.files()[idx % styles.len()]);
        let c = prepare(&Image::load(cp)?, opts.resolution)?;
        let s = prepare(&Image::load(sp)?, opts.resolution)?;
        prepared.push((stem(cp), stem(sp), c, s));
    }

    for _ in 0..WARMUP_CALLS {
        model.stylize_pair(&prepared[0].2, &prepared[0].3)?;
    }
    let mut rows = Vec::with_capacity(prepared.len());
    for (cname, sname, c, s) in &prepared {
        let started = Instant::now();
        let out = model.stylize_pair(c, s)?;
        let time_seconds = started.elapsed().as_secs_f64();
        rows.push(PairRow {
            content: cname.clone(),
            style: sname.clone(),
            content_loss: metric_content(c, &out, vgg)?,
            style_loss: metric_style(s, &out, vgg)?,
            ssim: ssim_with(&out, c, opts.ssim_mode)?,
            time_seconds,
        });
    }
    let mean = |f: fn(&PairRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let report = EvalReport {
        mean_content_loss: mean(|r| r.content_loss),
        mean_style_loss: mean(|r| r.style_loss),
        mean_ssim: mean(|r| r.ssim),
        mean_time_seconds: mean(|r| r.time_seconds),
        num_pairs: rows.len(),
        resolution: opts.resolution,
        seed: opts.seed,
        ssim_pairing: "stylized_vs_content".into(),
        ssim_mode: opts.ssim_mode,
        warmup_calls: WARMUP_CALLS,
        environment: Environment::current(),
        pairs: rows,
    };
    for (name, v) in [
        ("mean_content_loss", report.mean_content_loss),
        ("mean_style_loss", report.mean_style_loss),
        ("mean_ssim", report.mean_ssim),
    ] {
        if !v.is_finite() {
            return Err(StylerError::Data(format!("{name} is not finite")));
        }
    }
    Ok(report)
}
