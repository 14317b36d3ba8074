//! Training: configuration, the per-iteration step and the resumable loop.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use styler_grad::{Tape, Tensor, Var};

use crate::attention::{aea_forward, hybrid_attention};
use crate::checkpoint::Checkpoint;
use crate::data::{load_batch, ImageFolder};
use crate::decoder::decode_raw;
use crate::error::{Result, StylerError};
use crate::losses::{
    content_loss, identity_terms, ld_content_from_pyramids, ld_style_from_pyramids, style_loss, total_loss,
    weighted_total, IdentityInputs, LossBreakdown, LossParts, LossWeights, CONTENT_LAYERS, STYLE_LAYERS,
};
use crate::model::SIZE_MULTIPLE;
use crate::optim::AdamState;
use crate::params::{ModelConfig, ModelParams};
use crate::vgg::{FeaturePyramid, Tap, VggWeights, MIN_INPUT_SIDE};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LOCK_FILE: &str = "train.lock";

/// How the second stylization of each local-dissimilarity pair is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdMode {
    /// Extra decoder passes: `I_cs2[i]` stylizes `c_i` with `s_π(i)` and
    /// `I_sc2[i]` stylizes `c_π(i)` with `s_i`.
    #[default]
    ExtraPasses,
    /// Both second operands are `I_cs` with its batch permuted by `π`.
    PermutedFeatures,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub content_dir: PathBuf,
    pub style_dir: PathBuf,
    /// Checkpoints, the log and the lock file live here.
    pub output_dir: PathBuf,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub resize: usize,
    pub crop: usize,
    pub loss_weights: LossWeights,
    /// Taps compared by the content term.
    pub content_layers: Vec<Tap>,
    /// Taps compared by the local-dissimilarity content term.
    pub ld_content_layers: Vec<Tap>,
    pub enable_ld: bool,
    pub ld_mode: LdMode,
    /// Checkpoint period in iterations; 0 saves only at completion.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            content_dir: PathBuf::new(),
            style_dir: PathBuf::new(),
            output_dir: PathBuf::from("runs"),
            batch_size: 8,
            learning_rate: 1e-4,
            iterations: 160_000,
            resize: 512,
            crop: 256,
            loss_weights: LossWeights::default(),
            content_layers: CONTENT_LAYERS.to_vec(),
            ld_content_layers: CONTENT_LAYERS.to_vec(),
            enable_ld: true,
            ld_mode: LdMode::default(),
            checkpoint_every: 10_000,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| StylerError::config("<toml>", e.to_string()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| StylerError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| StylerError::config("<toml>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(StylerError::config("batch_size", "must be at least 1"));
        }
        if self.enable_ld && self.batch_size < 2 {
            return Err(StylerError::config("batch_size", "local-dissimilarity losses need at least 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(StylerError::config("learning_rate", "must be positive and finite"));
        }
        if self.crop > self.resize {
            return Err(StylerError::config("crop", format!("{} exceeds resize {}", self.crop, self.resize)));
        }
        if self.crop < MIN_INPUT_SIDE || self.crop % SIZE_MULTIPLE != 0 {
            return Err(StylerError::config(
                "crop",
                format!("must be a multiple of {SIZE_MULTIPLE} and at least {MIN_INPUT_SIDE}"),
            ));
        }
        if self.content_layers.is_empty() {
            return Err(StylerError::config("content_layers", "must name at least one tap"));
        }
        if self.ld_content_layers.is_empty() {
            return Err(StylerError::config("ld_content_layers", "must name at least one tap"));
        }
        if self.model.arch.base_width == 0 {
            return Err(StylerError::config("base_width", "must be positive"));
        }
        self.loss_weights.validate()
    }
}

/// Random stream of one iteration: independent of every other iteration so
/// a resumed run draws exactly what an uninterrupted one would.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Uniform permutation of `0..n`, redrawn once if it is the identity.
pub fn draw_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let identity: Vec<usize> = (0..n).collect();
    let mut perm = identity.clone();
    perm.shuffle(rng);
    if n >= 2 && perm == identity {
        perm.shuffle(rng);
    }
    perm
}

/// Loss terms and parameter gradients for one batch pair.
///
/// The encoder runs on constants, so gradients reach only `model`.
pub fn loss_and_gradients(
    model: &ModelParams,
    vgg: &VggWeights,
    contents: &Tensor<f32>,
    styles: &Tensor<f32>,
    permutation: &[usize],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, ModelParams)> {
    let n = contents.shape().first().copied().unwrap_or(0);
    if styles.shape().first() != Some(&n) || permutation.len() != n {
        return Err(StylerError::Dimension(format!(
            "content batch {:?}, style batch {:?} and permutation of length {} disagree",
            contents.shape(),
            styles.shape(),
            permutation.len()
        )));
    }
    let tape = Tape::new();
    let p = model.to_vars(|t| tape.leaf(t));
    let normalize = p.config.ha_normalize_value;
    let decode = |cc: &Var<f32>, ss: &Var<f32>| -> Result<Var<f32>> {
        decode_raw(&hybrid_attention(cc, ss, &p.ha, normalize)?, &p.decoder)
    };

    let ic = Var::constant(contents.clone());
    let is = Var::constant(styles.clone());
    let pc = vgg.encode_batch(&ic)?;
    let ps = vgg.encode_batch(&is)?;
    let fc = pc.get(Tap::Relu4_1);
    let fs = ps.get(Tap::Relu4_1);
    let cc = aea_forward(fc, &p.caea)?;
    let ss = aea_forward(fs, &p.saea)?;

    let ics = decode(&cc, &ss)?;
    let pcs = vgg.encode_batch(&ics)?;
    let l_content = content_loss(&pc, &pcs, &cfg.content_layers)?;
    let l_style = style_loss(&ps, &pcs, &STYLE_LAYERS)?;

    let icc = decode(&cc, &aea_forward(fc, &p.saea)?)?;
    let iss = decode(&aea_forward(fs, &p.caea)?, &ss)?;
    let l_identity = identity_terms(
        &IdentityInputs {
            content: &ic,
            content_pyramid: &pc,
            content_recon: &icc,
            content_recon_pyramid: &vgg.encode_batch(&icc)?,
            style: &is,
            style_pyramid: &ps,
            style_recon: &iss,
            style_recon_pyramid: &vgg.encode_batch(&iss)?,
        },
        cfg.loss_weights.lambda_id1,
        cfg.loss_weights.lambda_id2,
    )?;

    let (l_ldc, l_lds) = if cfg.enable_ld {
        let (second_c, second_s): (FeaturePyramid, FeaturePyramid) = match cfg.ld_mode {
            LdMode::ExtraPasses => {
                let ics2 = decode(&cc, &ss.select0(permutation)?)?;
                let isc2 = decode(&cc.select0(permutation)?, &ss)?;
                (vgg.encode_batch(&ics2)?, vgg.encode_batch(&isc2)?)
            }
            LdMode::PermutedFeatures => {
                let permuted = pcs.select(permutation)?;
                (permuted.clone(), permuted)
            }
        };
        (
            ld_content_from_pyramids(&pcs, &second_c, &cfg.ld_content_layers)?,
            ld_style_from_pyramids(&pcs, &second_s)?,
        )
    } else {
        (Var::constant(Tensor::scalar(0.0)), Var::constant(Tensor::scalar(0.0)))
    };

    let total = weighted_total([&l_content, &l_style, &l_identity, &l_ldc, &l_lds], &cfg.loss_weights);
    let value = |v: &Var<f32>| -> Result<f64> { Ok(f64::from(v.value().item()?)) };
    let parts = LossParts {
        content: value(&l_content)?,
        style: value(&l_style)?,
        identity: value(&l_identity)?,
        ld_content: value(&l_ldc)?,
        ld_style: value(&l_lds)?,
    };
    let breakdown = total_loss(&parts, &cfg.loss_weights)?;
    if !value(&total)?.is_finite() {
        return Err(StylerError::Numeric { term: "total" });
    }
    let grads = tape.backward(&total)?;
    Ok((breakdown, p.map_named(|_, v| grads.get_or_zeros(v))))
}

/// One optimizer step; `rng` supplies the permutation. Parameters are left
/// untouched when a loss term is non-finite.
pub fn train_step<R: Rng + ?Sized>(
    model: &mut ModelParams,
    optimizer: &mut AdamState,
    vgg: &VggWeights,
    contents: &Tensor<f32>,
    styles: &Tensor<f32>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let n = contents.shape().first().copied().unwrap_or(0);
    if cfg.enable_ld && n < 2 {
        return Err(StylerError::Argument("local-dissimilarity losses need a batch of at least 2".into()));
    }
    let permutation = draw_permutation(n, rng);
    let (losses, grads) = loss_and_gradients(model, vgg, contents, styles, &permutation, cfg)?;
    optimizer.update(model, &grads, cfg.learning_rate)?;
    Ok(losses)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Zero-based index of the iteration just completed.
    pub iteration: u64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    /// Seconds since the Unix epoch when the step finished.
    pub wall_clock: f64,
    pub step_seconds: f64,
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:08}.safetensors"))
}

/// Checkpoint in `dir` with the highest iteration, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(u64, PathBuf)>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(StylerError::io(dir, e)),
    };
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in entries {
        let path = entry.map_err(|e| StylerError::io(dir, e))?.path();
        let iteration = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("checkpoint_")?.strip_suffix(".safetensors")?.parse::<u64>().ok());
        if let Some(it) = iteration {
            if best.as_ref().is_none_or(|(b, _)| it > *b) {
                best = Some((it, path));
            }
        }
    }
    Ok(best)
}

/// Exclusive ownership of an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(|e| StylerError::io(&path, e))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StylerError::Argument(format!(
                "{} is locked by another training run; remove {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(StylerError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Keeps only log lines for iterations before `resume_at`, then opens the
/// log for appending.
fn open_log(path: &Path, resume_at: u64) -> Result<File> {
    let mut kept = Vec::new();
    if let Ok(f) = File::open(path) {
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| StylerError::io(path, e))?;
            if let Ok(rec) = serde_json::from_str::<StepRecord>(&line) {
                if rec.iteration < resume_at {
                    kept.push(line);
                }
            }
        }
    }
    let mut f = File::create(path).map_err(|e| StylerError::io(path, e))?;
    for line in kept {
        writeln!(f, "{line}").map_err(|e| StylerError::io(path, e))?;
    }
    Ok(f)
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// [`train_with`] without a progress callback.
pub fn train(cfg: &TrainConfig, vgg: &VggWeights) -> Result<Checkpoint> {
    train_with(cfg, vgg, |_| {})
}

/// Runs `cfg.iterations` steps, resuming from the newest checkpoint in
/// `cfg.output_dir` if there is one. Every step appends a [`StepRecord`] to
/// the log and is passed to `on_step`; checkpoints are written every
/// `cfg.checkpoint_every` steps and at completion.
pub fn train_with(cfg: &TrainConfig, vgg: &VggWeights, mut on_step: impl FnMut(&StepRecord)) -> Result<Checkpoint> {
    cfg.validate()?;
    if vgg.arch() != cfg.model.arch {
        return Err(StylerError::config("model", "encoder width does not match the model config"));
    }
    let mut contents = ImageFolder::open(&cfg.content_dir)?;
    let mut styles = ImageFolder::open(&cfg.style_dir)?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| StylerError::io(dir, e))?;
    let _lock = DirLock::acquire(dir)?;

    let mut ckpt = match latest_checkpoint(dir)? {
        Some((_, path)) => {
            let ckpt = Checkpoint::load_expecting(&path, cfg.model)?;
            log::info!("resuming from {} at iteration {}", path.display(), ckpt.iteration);
            ckpt
        }
        None => {
            let ckpt = Checkpoint::initial(ModelParams::init(cfg.model, cfg.seed), Some(cfg.clone()));
            ckpt.save(checkpoint_path(dir, 0))?;
            ckpt
        }
    };
    ckpt.train_config = Some(cfg.clone());
    let log_path = dir.join(LOG_FILE);
    let mut log_file = open_log(&log_path, ckpt.iteration)?;

    let mut last_saved = ckpt.iteration;
    while ckpt.iteration < cfg.iterations {
        let it = ckpt.iteration;
        let started = Instant::now();
        let mut rng = iteration_rng(cfg.seed, it);
        let c = load_batch(&mut contents, cfg.batch_size, cfg.resize, cfg.crop, &mut rng)?;
        let s = load_batch(&mut styles, cfg.batch_size, cfg.resize, cfg.crop, &mut rng)?;
        let losses = train_step(&mut ckpt.model, &mut ckpt.optimizer, vgg, &c, &s, cfg, &mut rng)?;
        ckpt.iteration += 1;

        let record = StepRecord {
            iteration: it,
            losses,
            wall_clock: unix_seconds(),
            step_seconds: started.elapsed().as_secs_f64(),
        };
        let line = serde_json::to_string(&record).map_err(|e| StylerError::Argument(e.to_string()))?;
        writeln!(log_file, "{line}").map_err(|e| StylerError::io(&log_path, e))?;
        log::info!("iteration {it}: total {:.4} ({:.1}s)", losses.total, record.step_seconds);
        on_step(&record);

        if cfg.checkpoint_every > 0 && ckpt.iteration % cfg.checkpoint_every == 0 {
            ckpt.save(checkpoint_path(dir, ckpt.iteration))?;
            last_saved = ckpt.iteration;
        }
    }
    if last_saved != ckpt.iteration {
        ckpt.save(checkpoint_path(dir, ckpt.iteration))?;
    }
    Ok(ckpt)
}
