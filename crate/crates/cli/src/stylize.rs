use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use clap::{Args, ValueEnum};
use styler_core::data::ImageFolder;
use styler_core::{Checkpoint, Image, ImageFormat, Stylizer, VggWeights};

use crate::{Failure, VggSource};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Png,
    Jpeg,
}

#[derive(Args, Debug)]
pub struct StylizeArgs {
    /// Content image or folder of images.
    #[arg(long)]
    content: PathBuf,
    /// Style image or folder of images.
    #[arg(long)]
    style: PathBuf,
    /// Model checkpoint written by `styler train`.
    #[arg(long, env = "STYLER_CHECKPOINT")]
    checkpoint: PathBuf,
    /// Content-style trade-off in [0, 1]; 0 reconstructs the content.
    #[arg(long, default_value_t = 1.0, value_parser = parse_alpha)]
    alpha: f32,
    /// Output folder, created if missing.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Png)]
    format: Format,
    /// JPEG quality, used with `--format jpeg`.
    #[arg(long, default_value_t = 95, value_parser = clap::value_parser!(u8).range(1..=100))]
    jpeg_quality: u8,
    /// Pairs stylized concurrently.
    #[arg(long, default_value = "1")]
    jobs: NonZeroUsize,
    #[command(flatten)]
    vgg: VggSource,
}

fn parse_alpha(s: &str) -> Result<f32, String> {
    let alpha: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(format!("alpha must lie in [0, 1], got {s}"))
    }
}

/// A single file, or every decodable-looking image in a folder.
fn inputs(path: &Path, flag: &str) -> Result<Vec<PathBuf>, Failure> {
    if path.is_dir() {
        Ok(ImageFolder::open(path)?.files().to_vec())
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Failure::Usage(format!("--{flag} {} does not exist", path.display())))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `{content}_{style}_{alpha}.{ext}` inside `dir`.
pub fn output_path(dir: &Path, content: &Path, style: &Path, alpha: f32, format: ImageFormat) -> PathBuf {
    dir.join(format!("{}_{}_{alpha:.2}.{}", stem(content), stem(style), format.extension()))
}

struct Job {
    content: PathBuf,
    style: PathBuf,
    output: PathBuf,
}

pub fn run(args: StylizeArgs) -> Result<(), Failure> {
    let contents = inputs(&args.content, "content")?;
    let styles = inputs(&args.style, "style")?;
    let format = match args.format {
        Format::Png => ImageFormat::Png,
        Format::Jpeg => ImageFormat::Jpeg { quality: args.jpeg_quality },
    };
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = checkpoint.model;
    let arch = model.config.arch;
    let named = args.vgg.load(arch)?.named_tensors().clone();
    std::fs::create_dir_all(&args.output)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.output.display())))?;

    let jobs: Vec<Job> = contents
        .iter()
        .flat_map(|c| styles.iter().map(move |s| (c, s)))
        .map(|(c, s)| Job {
            content: c.clone(),
            style: s.clone(),
            output: output_path(&args.output, c, s, args.alpha, format),
        })
        .collect();

    // The encoder is rebuilt per worker because autodiff values are not `Sync`.
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    thread::scope(|scope| {
        for _ in 0..args.jobs.get().min(jobs.len()) {
            scope.spawn(|| {
                let report = |msg: String| failures.lock().expect("failure list").push(msg);
                let vgg = match VggWeights::from_named(named.clone(), arch) {
                    Ok(v) => v,
                    Err(e) => return report(e.to_string()),
                };
                let stylizer = match Stylizer::new(&vgg, &model) {
                    Ok(s) => s,
                    Err(e) => return report(e.to_string()),
                };
                loop {
                    let Some(job) = jobs.get(next.fetch_add(1, Ordering::Relaxed)) else { break };
                    let result = Image::load(&job.content)
                        .and_then(|c| Ok((c, Image::load(&job.style)?)))
                        .and_then(|(c, s)| stylizer.stylize(&c, &s, args.alpha))
                        .and_then(|out| out.save(&job.output, format));
                    match result {
                        Ok(()) => println!("{}", job.output.display()),
                        Err(e) => report(format!("{} x {}: {e}", job.content.display(), job.style.display())),
                    }
                }
            });
        }
    });
    let failures = failures.into_inner().expect("failure list");
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} of {} pairs failed:\n  {}",
            failures.len(),
            jobs.len(),
            failures.join("\n  ")
        )))
    }
}
