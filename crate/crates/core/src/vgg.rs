//! Frozen VGG-19 feature extractor, tapped at `relu1_1` … `relu5_1`.
//!
//! Weight files follow the torchvision layout (RGB input, ImageNet
//! mean/std normalization), with entries renamed `conv{b}_{i}.weight` /
//! `conv{b}_{i}.bias`. Inputs are images in `[0, 1]`; the normalization is
//! applied inside [`VggWeights::encode`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use styler_grad::{Element, Tensor, Var};

use crate::error::{Result, StylerError};
use crate::image::Image;
use crate::tensor_io::NamedTensors;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Smallest input side for which `relu5_1` is non-degenerate.
pub const MIN_INPUT_SIDE: usize = 16;

/// Channel widths of the VGG-19 topology.
///
/// `base_width = 64` is the standard network; narrower variants keep the
/// same layer structure and serve tests and quick experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub base_width: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self::STANDARD
    }
}

impl Arch {
    pub const STANDARD: Arch = Arch { base_width: 64 };

    /// Channels at `relu{k}_1` for k = 1..=5.
    pub fn widths(self) -> [usize; 5] {
        let b = self.base_width;
        [b, 2 * b, 4 * b, 8 * b, 8 * b]
    }

    /// Channel count of the `relu4_1` features the attention core sees.
    pub fn feature_channels(self) -> usize {
        self.widths()[3]
    }

    /// `(name, in_channels, out_channels)` for every convolution through `conv5_1`.
    pub fn conv_layers(self) -> Vec<(String, usize, usize)> {
        let w = self.widths();
        let mut layers = Vec::new();
        let mut cin = 3;
        for (block, &reps) in [2usize, 2, 4, 4, 1].iter().enumerate() {
            for i in 0..reps {
                layers.push((format!("conv{}_{}", block + 1, i + 1), cin, w[block]));
                cin = w[block];
            }
        }
        layers
    }
}

/// One of the five tapped activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tap {
    #[serde(rename = "relu1_1")]
    Relu1_1,
    #[serde(rename = "relu2_1")]
    Relu2_1,
    #[serde(rename = "relu3_1")]
    Relu3_1,
    #[serde(rename = "relu4_1")]
    Relu4_1,
    #[serde(rename = "relu5_1")]
    Relu5_1,
}

impl Tap {
    pub const ALL: [Tap; 5] = [Tap::Relu1_1, Tap::Relu2_1, Tap::Relu3_1, Tap::Relu4_1, Tap::Relu5_1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"][self.index()]
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tap {
    type Err = StylerError;

    fn from_str(s: &str) -> Result<Self> {
        Tap::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| StylerError::Argument(format!("unknown tap `{s}`; expected relu1_1..relu5_1")))
    }
}

/// Activations at all five taps; batched as `[N, C, H, W]`.
#[derive(Clone, Debug)]
pub struct FeaturePyramid<T: Element = f32> {
    taps: [Var<T>; 5],
}

impl<T: Element> FeaturePyramid<T> {
    pub fn from_taps(taps: [Var<T>; 5]) -> Self {
        Self { taps }
    }

    pub fn get(&self, tap: Tap) -> &Var<T> {
        &self.taps[tap.index()]
    }

    pub fn taps(&self) -> &[Var<T>; 5] {
        &self.taps
    }

    /// Leading-axis gather applied to every tap.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(5);
        for t in &self.taps {
            out.push(t.select0(indices)?);
        }
        Ok(Self { taps: out.try_into().expect("five taps") })
    }
}

struct ConvLayer {
    weight: Var<f32>,
    bias: Var<f32>,
}

enum Stage {
    Conv(ConvLayer),
    Pool,
    Tap(Tap),
}

/// Immutable pretrained VGG-19 convolution weights through `conv5_1`.
pub struct VggWeights {
    arch: Arch,
    stages: Vec<Stage>,
    named: NamedTensors,
}

impl fmt::Debug for VggWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VggWeights").field("arch", &self.arch).finish_non_exhaustive()
    }
}

impl VggWeights {
    /// Loads standard-width VGG-19 weights.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_arch(path, Arch::STANDARD)
    }

    pub fn load_with_arch(path: impl AsRef<Path>, arch: Arch) -> Result<Self> {
        Self::from_named(NamedTensors::read(path)?, arch)
    }

    /// Validates names and shapes; extra entries (e.g. classifier layers) are ignored.
    pub fn from_named(mut named: NamedTensors, arch: Arch) -> Result<Self> {
        let mut kept = NamedTensors::default();
        for (name, cin, cout) in arch.conv_layers() {
            let (wn, bn) = (format!("{name}.weight"), format!("{name}.bias"));
            if !named.tensors.contains_key(&wn) || !named.tensors.contains_key(&bn) {
                return Err(StylerError::schema(&name, format!("{name} absent")));
            }
            kept.insert(wn.clone(), named.take(&wn, &[cout, cin, 3, 3])?);
            kept.insert(bn.clone(), named.take(&bn, &[cout])?);
        }
        Ok(Self::assemble(kept, arch))
    }

    fn assemble(named: NamedTensors, arch: Arch) -> Self {
        let mut stages = Vec::new();
        for (name, _, _) in arch.conv_layers() {
            if name.ends_with("_1") && name != "conv1_1" {
                stages.push(Stage::Pool);
            }
            stages.push(Stage::Conv(ConvLayer {
                weight: Var::constant(named.tensors[&format!("{name}.weight")].clone()),
                bias: Var::constant(named.tensors[&format!("{name}.bias")].clone()),
            }));
            if name.ends_with("_1") {
                let block = name.as_bytes()[4] - b'1';
                stages.push(Stage::Tap(Tap::ALL[block as usize]));
            }
        }
        Self { arch, stages, named }
    }

    /// Seeded He-initialised weights with the VGG-19 topology.
    ///
    /// Stands in for the pretrained file where none is available (tests,
    /// smoke runs); the features are random projections, not ImageNet ones.
    pub fn synthetic(arch: Arch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut named = NamedTensors::default();
        let bias_dist = Uniform::new_inclusive(-0.05f32, 0.05);
        for (name, cin, cout) in arch.conv_layers() {
            let normal = Normal::new(0.0f32, (2.0 / (cin * 9) as f32).sqrt()).expect("positive std");
            named.insert(
                format!("{name}.weight"),
                Tensor::from_fn([cout, cin, 3, 3], |_| normal.sample(&mut rng)),
            );
            named.insert(format!("{name}.bias"), Tensor::from_fn([cout], |_| bias_dist.sample(&mut rng)));
        }
        Self::assemble(named, arch)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn named_tensors(&self) -> &NamedTensors {
        &self.named
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.named.write(path)
    }

    fn check_input(x: &Var<f32>) -> Result<()> {
        let (_, c, h, w) = x.value().dims4("vgg encode")?;
        if c != 3 {
            return Err(StylerError::Dimension(format!("expected 3 input channels, got {c}")));
        }
        if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
            return Err(StylerError::Dimension(format!(
                "image {w}x{h} too small to encode; both sides must be at least {MIN_INPUT_SIDE}"
            )));
        }
        Ok(())
    }

    fn run(&self, images: &Var<f32>, last: Tap, mut on_tap: impl FnMut(Tap, &Var<f32>)) -> Result<Var<f32>> {
        Self::check_input(images)?;
        let scale = IMAGENET_STD.map(|s| 1.0 / s);
        let shift = [0, 1, 2].map(|c| -IMAGENET_MEAN[c] / IMAGENET_STD[c]);
        let mut x = images.channel_affine(&scale, &shift)?;
        for stage in &self.stages {
            match stage {
                Stage::Conv(l) => x = x.conv2d(&l.weight, Some(&l.bias), 1)?.relu(),
                Stage::Pool => x = x.max_pool2()?,
                Stage::Tap(t) => {
                    on_tap(*t, &x);
                    if *t == last {
                        return Ok(x);
                    }
                }
            }
        }
        unreachable!("every tap is present in the stage list")
    }

    /// All five taps of a `[N, 3, H, W]` batch in `[0, 1]`.
    ///
    /// Gradients flow to `images` when it is tracked; the weights never
    /// receive gradients.
    pub fn encode_batch(&self, images: &Var<f32>) -> Result<FeaturePyramid<f32>> {
        let mut taps = Vec::with_capacity(5);
        self.run(images, Tap::Relu5_1, |_, x| taps.push(x.clone()))?;
        Ok(FeaturePyramid::from_taps(taps.try_into().expect("five taps")))
    }

    /// Runs only the prefix of the network needed for `tap`.
    pub fn encode_batch_to(&self, images: &Var<f32>, tap: Tap) -> Result<Var<f32>> {
        self.run(images, tap, |_, _| {})
    }

    pub fn encode(&self, img: &Image) -> Result<FeaturePyramid<f32>> {
        self.encode_batch(&Var::constant(img.to_tensor()))
    }

    /// `tap` is parsed from its name; unknown names are an argument error.
    pub fn encode_to(&self, img: &Image, tap: &str) -> Result<Tensor<f32>> {
        let tap: Tap = tap.parse()?;
        Ok(self.encode_batch_to(&Var::constant(img.to_tensor()), tap)?.into_value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VggWeights {
        VggWeights::synthetic(Arch { base_width: 2 }, 3)
    }

    fn noise(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |c, y, x| (((x * 7 + y * 13 + c * 5) % 23) as f32) / 22.0).unwrap()
    }

    #[test]
    fn standard_layer_table() {
        let layers = Arch::STANDARD.conv_layers();
        assert_eq!(layers.len(), 13);
        assert_eq!(layers[0], ("conv1_1".to_string(), 3, 64));
        assert_eq!(layers[8], ("conv4_1".to_string(), 256, 512));
        assert_eq!(layers[12], ("conv5_1".to_string(), 512, 512));
    }

    #[test]
    fn tap_names_parse() {
        assert_eq!("relu4_1".parse::<Tap>().unwrap(), Tap::Relu4_1);
        assert!(matches!("relu6_1".parse::<Tap>(), Err(StylerError::Argument(_))));
    }

    #[test]
    fn pyramid_shapes_follow_pooling() {
        let vgg = small();
        let pyr = vgg.encode(&noise(40, 35)).unwrap();
        let expect = [[2, 35, 40], [4, 17, 20], [8, 8, 10], [16, 4, 5], [16, 2, 2]];
        for (tap, e) in Tap::ALL.iter().zip(expect) {
            assert_eq!(pyr.get(*tap).shape(), &[1, e[0], e[1], e[2]], "{tap}");
        }
    }

    #[test]
    fn encode_to_matches_full_pyramid_bitwise() {
        let vgg = small();
        let img = noise(32, 32);
        let pyr = vgg.encode(&img).unwrap();
        for tap in Tap::ALL {
            let direct = vgg.encode_to(&img, tap.name()).unwrap();
            assert_eq!(&direct, pyr.get(tap).value(), "{tap}");
        }
        assert!(matches!(vgg.encode_to(&img, "relu6_1"), Err(StylerError::Argument(_))));
    }

    #[test]
    fn too_small_input_is_a_dimension_error() {
        let err = small().encode(&noise(15, 32)).unwrap_err();
        assert!(matches!(err, StylerError::Dimension(_)), "{err}");
    }

    #[test]
    fn missing_layer_is_named() {
        let mut named = small().named_tensors().clone();
        named.tensors.remove("conv4_1.weight");
        let err = VggWeights::from_named(named, Arch { base_width: 2 }).unwrap_err();
        assert!(err.to_string().contains("conv4_1 absent"), "{err}");
    }
}
