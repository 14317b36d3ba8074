use std::borrow::BorrowMut;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use styler_core::{Arch, Checkpoint, Image, ImageFormat, ModelConfig, ModelParams, VggWeights};
use tempfile::TempDir;

const SMALL: Arch = Arch { base_width: 4 };

fn styler(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_styler"));
    cmd.args(args).env_remove("STYLER_CHECKPOINT").env_remove("STYLER_VGG").env("RUST_LOG", "warn");
    cmd
}

fn run(mut cmd: impl BorrowMut<Command>) -> Output {
    cmd.borrow_mut().output().expect("spawn styler")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn image(w: usize, h: usize, seed: u64) -> Image {
    let s = seed as f32 * 0.9;
    Image::from_fn(w, h, |c, y, x| {
        0.5 + 0.45 * ((x as f32 * 0.2 + s) * (c as f32 + 1.0)).sin() * ((y as f32 * 0.15 - s) * 0.8).cos()
    })
    .unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Three content images, two style images, a small checkpoint and matching encoder weights.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for (sub, n, seed) in [("content", 3, 0), ("style", 2, 10)] {
            std::fs::create_dir_all(root.join(sub)).unwrap();
            for i in 0..n {
                let img = image(40 + 7 * i, 36 + 5 * i, seed + i as u64);
                img.save(root.join(sub).join(format!("{sub}{i}.png")), ImageFormat::Png).unwrap();
            }
        }
        Checkpoint::initial(ModelParams::init(ModelConfig::with_arch(SMALL), 1), None)
            .save(root.join("model.safetensors"))
            .unwrap();
        VggWeights::synthetic(SMALL, 2).save(root.join("vgg.safetensors")).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn s(&self, rel: &str) -> String {
        self.path(rel).to_string_lossy().into_owned()
    }

    fn stylize(&self, extra: &[&str]) -> Command {
        let mut cmd = styler(&["stylize", "--checkpoint", &self.s("model.safetensors"), "--vgg", &self.s("vgg.safetensors")]);
        cmd.args(extra);
        cmd
    }
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match std::fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn single_pair_writes_one_image_at_content_resolution() {
    let fx = Fixture::new();
    let out = run(fx.stylize(&[
        "--content",
        &fx.s("content/content1.png"),
        "--style",
        &fx.s("style/style0.png"),
        "--output",
        &fx.s("out"),
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(files(&fx.path("out")), ["content1_style0_1.00.png"]);
    let img = Image::load(fx.path("out/content1_style0_1.00.png")).unwrap();
    assert_eq!((img.width(), img.height()), (47, 41));
    assert!(stdout(&out).contains("content1_style0_1.00.png"));
}

#[test]
fn folders_form_the_cartesian_product() {
    let fx = Fixture::new();
    let out = run(fx.stylize(&[
        "--content",
        &fx.s("content"),
        "--style",
        &fx.s("style"),
        "--output",
        &fx.s("out"),
        "--alpha",
        "0.5",
        "--jobs",
        "2",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let names = files(&fx.path("out"));
    assert_eq!(names.len(), 6);
    assert!(names.iter().all(|n| n.ends_with("_0.50.png")));
}

#[test]
fn parallel_and_serial_outputs_agree() {
    let fx = Fixture::new();
    for (jobs, dir) in [("1", "serial"), ("3", "parallel")] {
        let out = run(fx.stylize(&["--content", &fx.s("content"), "--style", &fx.s("style"), "--output", &fx.s(dir), "--jobs", jobs]));
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in files(&fx.path("serial")) {
        assert_eq!(
            std::fs::read(fx.path("serial").join(&name)).unwrap(),
            std::fs::read(fx.path("parallel").join(&name)).unwrap()
        );
    }
}

#[test]
fn alpha_zero_ignores_the_style_image() {
    let fx = Fixture::new();
    let out = run(fx.stylize(&["--content", &fx.s("content/content0.png"), "--style", &fx.s("style"), "--output", &fx.s("out"), "--alpha", "0"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let a = std::fs::read(fx.path("out/content0_style0_0.00.png")).unwrap();
    let b = std::fs::read(fx.path("out/content0_style1_0.00.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn alpha_outside_unit_interval_is_a_usage_error() {
    let fx = Fixture::new();
    for alpha in ["1.5", "-0.1", "nan"] {
        let out = run(fx.stylize(&["--content", &fx.s("content"), "--style", &fx.s("style"), "--output", &fx.s("out"), "--alpha", alpha]));
        assert_eq!(out.status.code(), Some(2), "alpha {alpha}");
    }
    assert!(files(&fx.path("out")).is_empty());
}

#[test]
fn jpeg_output_uses_the_jpg_extension() {
    let fx = Fixture::new();
    let out = run(fx.stylize(&[
        "--content",
        &fx.s("content/content0.png"),
        "--style",
        &fx.s("style/style0.png"),
        "--output",
        &fx.s("out"),
        "--format",
        "jpeg",
        "--jpeg-quality",
        "80",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(files(&fx.path("out")), ["content0_style0_1.00.jpg"]);
}

#[test]
fn checkpoint_comes_from_the_environment() {
    let fx = Fixture::new();
    let mut cmd = styler(&[
        "stylize",
        "--vgg",
        &fx.s("vgg.safetensors"),
        "--content",
        &fx.s("content/content0.png"),
        "--style",
        &fx.s("style/style0.png"),
        "--output",
        &fx.s("out"),
    ]);
    cmd.env("STYLER_CHECKPOINT", fx.path("model.safetensors"));
    let out = run(&mut cmd);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(files(&fx.path("out")).len(), 1);
}

#[test]
fn unreadable_checkpoints_fail_at_runtime() {
    let fx = Fixture::new();
    let args = |ckpt: &str| {
        let mut cmd = styler(&[
            "stylize",
            "--checkpoint",
            ckpt,
            "--vgg",
            &fx.s("vgg.safetensors"),
            "--content",
            &fx.s("content"),
            "--style",
            &fx.s("style"),
            "--output",
            &fx.s("out"),
        ]);
        run(&mut cmd)
    };
    let missing = args(&fx.s("absent.safetensors"));
    assert_eq!(missing.status.code(), Some(1));

    let bytes = std::fs::read(fx.path("model.safetensors")).unwrap();
    std::fs::write(fx.path("truncated.safetensors"), &bytes[..bytes.len() / 2]).unwrap();
    let truncated = args(&fx.s("truncated.safetensors"));
    assert_eq!(truncated.status.code(), Some(1));
    assert!(stderr(&truncated).contains("schema"), "{}", stderr(&truncated));
    assert!(files(&fx.path("out")).is_empty());
}

#[test]
fn missing_inputs_and_encoder_are_usage_errors() {
    let fx = Fixture::new();
    let out = run(fx.stylize(&["--content", &fx.s("nowhere"), "--style", &fx.s("style"), "--output", &fx.s("out")]));
    assert_eq!(out.status.code(), Some(2));

    let mut cmd = styler(&[
        "stylize",
        "--checkpoint",
        &fx.s("model.safetensors"),
        "--content",
        &fx.s("content"),
        "--style",
        &fx.s("style"),
        "--output",
        &fx.s("out"),
    ]);
    let out = run(&mut cmd);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--vgg"));

    let out = run(&mut styler(&["stylize", "--bogus"]));
    assert_eq!(out.status.code(), Some(2));
}

fn train(fx: &Fixture, extra: &[&str]) -> Output {
    let mut cmd = styler(&["train", "--synthetic-vgg-seed", "3", "--base-width", "4", "--output-dir", &fx.s("run")]);
    cmd.args(extra);
    run(&mut cmd)
}

#[test]
fn zero_iterations_writes_the_initial_checkpoint() {
    let fx = Fixture::new();
    let out = train(&fx, &["--content-dir", &fx.s("content"), "--style-dir", &fx.s("style"), "--iterations", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let printed = PathBuf::from(stdout(&out).trim());
    assert!(printed.is_file(), "{}", printed.display());
    let ckpt = Checkpoint::load(&printed).unwrap();
    assert_eq!(ckpt.iteration, 0);
    assert_eq!(ckpt.model.config.arch, SMALL);
}

#[test]
fn short_run_with_config_file_and_overrides() {
    let fx = Fixture::new();
    let config = format!(
        "content_dir = {:?}\nstyle_dir = {:?}\nbatch_size = 2\nresize = 40\ncrop = 32\niterations = 5\n\n[loss_weights]\nlambda_s = 3.0\n",
        fx.s("content"),
        fx.s("style")
    );
    std::fs::write(fx.path("train.toml"), config).unwrap();
    let out = train(&fx, &["--config", &fx.s("train.toml"), "--iterations", "2", "--checkpoint-every", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = Checkpoint::load(stdout(&out).trim()).unwrap();
    assert_eq!(ckpt.iteration, 2);
    let cfg = ckpt.train_config.unwrap();
    assert_eq!((cfg.iterations, cfg.batch_size, cfg.loss_weights.lambda_s), (2, 2, 3.0));
    let log = std::fs::read_to_string(fx.path("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn invalid_training_requests_are_usage_errors() {
    let fx = Fixture::new();
    let dirs = ["--content-dir", &fx.s("content"), "--style-dir", &fx.s("style")];

    let out = train(&fx, &[&dirs[..], &["--batch-size", "1", "--enable-ld", "true"]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("batch_size"), "{}", stderr(&out));

    let out = train(&fx, &["--style-dir", &fx.s("style"), "--iterations", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--content-dir"));

    let out = train(&fx, &[&dirs[..], &["--crop", "30", "--resize", "64"]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("crop"));

    std::fs::write(fx.path("bad.toml"), "batch_sise = 4\n").unwrap();
    let out = train(&fx, &["--config", &fx.s("bad.toml")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("batch_sise"), "{}", stderr(&out));
    assert!(!fx.path("run").exists());
}

fn eval(fx: &Fixture, extra: &[&str]) -> Output {
    let mut cmd = styler(&[
        "eval",
        "--vgg",
        &fx.s("vgg.safetensors"),
        "--content-dir",
        &fx.s("content"),
        "--style-dir",
        &fx.s("style"),
        "--report",
        &fx.s("report.json"),
        "--resolution",
        "32",
    ]);
    cmd.args(extra);
    run(&mut cmd)
}

#[test]
fn eval_writes_the_report_and_prints_the_summary() {
    let fx = Fixture::new();
    let out = eval(&fx, &["--checkpoint", &fx.s("model.safetensors"), "--num-pairs", "4", "--seed", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["L_c", "L_s", "SSIM", "Time/sec"]);
    assert_eq!(lines[1].split_whitespace().count(), 4);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fx.path("report.json")).unwrap()).unwrap();
    let metrics: Vec<&String> = report.as_object().unwrap().keys().filter(|k| k.starts_with("mean_")).collect();
    assert_eq!(metrics, ["mean_content_loss", "mean_ssim", "mean_style_loss", "mean_time_seconds"]);
    assert_eq!(report["num_pairs"], 4);
    assert_eq!(report["pairs"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_errors_map_to_exit_codes() {
    let fx = Fixture::new();
    let out = eval(&fx, &["--checkpoint", &fx.s("model.safetensors"), "--num-pairs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = eval(&fx, &["--checkpoint", &fx.s("absent.safetensors"), "--num-pairs", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = eval(&fx, &["--checkpoint", &fx.s("model.safetensors"), "--num-pairs", "7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!fx.path("report.json").exists());
}
