//! Trainable parameter groups and their named-tensor schema.
//!
//! Every group is generic over its slot type so the same structure holds
//! stored tensors (`Tensor<f32>`), tape leaves (`Var<T>`), optimizer
//! moments, or expected shapes (`Vec<usize>`).

use std::convert::Infallible;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use styler_grad::{Element, Tensor, Var};

use crate::error::Result;
use crate::vgg::Arch;

/// Weight `[Cout, Cin, k, k]` and bias `[Cout]` of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<P> {
    pub weight: P,
    pub bias: P,
}

impl<P> ConvParams<P> {
    fn try_map_named<'a, Q, E>(
        &'a self,
        prefix: &str,
        f: &mut impl FnMut(&str, &'a P) -> std::result::Result<Q, E>,
    ) -> std::result::Result<ConvParams<Q>, E> {
        Ok(ConvParams {
            weight: f(&format!("{prefix}.weight"), &self.weight)?,
            bias: f(&format!("{prefix}.bias"), &self.bias)?,
        })
    }
}

impl<T: Element> ConvParams<Var<T>> {
    /// Stride-1 convolution with `pad` pixels of reflection padding.
    pub fn apply(&self, x: &Var<T>, pad: usize) -> Result<Var<T>> {
        Ok(x.conv2d(&self.weight, Some(&self.bias), pad)?)
    }
}

/// Query/key/value 1×1 projections of one affinity-enhanced attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct AeaParams<P> {
    pub q: ConvParams<P>,
    pub k: ConvParams<P>,
    pub v: ConvParams<P>,
}

/// 1×1 projections of the hybrid (content → style) attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct HaParams<P> {
    pub cc1: ConvParams<P>,
    pub ss1: ConvParams<P>,
    pub ss2: ConvParams<P>,
}

/// Nine 3×3 convolutions mirroring VGG-19 from `relu4_1` back to RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams<P> {
    pub convs: Vec<ConvParams<P>>,
}

/// Architecture switches stored alongside the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Apply mean–variance normalization on the hybrid-attention value path.
    #[serde(default)]
    pub ha_normalize_value: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { arch: Arch::STANDARD, ha_normalize_value: false }
    }
}

impl ModelConfig {
    pub fn with_arch(arch: Arch) -> Self {
        Self { arch, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P = Tensor<f32>> {
    pub config: ModelConfig,
    pub caea: AeaParams<P>,
    pub saea: AeaParams<P>,
    pub ha: HaParams<P>,
    pub decoder: DecoderParams<P>,
}

/// `(in, out)` channels of the decoder convolutions for `arch`.
pub fn decoder_channels(arch: Arch) -> [(usize, usize); 9] {
    let [c1, c2, c3, c4, _] = arch.widths();
    [(c4, c3), (c3, c3), (c3, c3), (c3, c3), (c3, c2), (c2, c2), (c2, c1), (c1, c1), (c1, 3)]
}

impl<P> ModelParams<P> {
    /// Maps every slot, passing its schema name (`caea.q.weight`,
    /// `ha.cc1.bias`, `decoder.conv_1.weight`, …).
    pub fn try_map_named<'a, Q, E>(
        &'a self,
        mut f: impl FnMut(&str, &'a P) -> std::result::Result<Q, E>,
    ) -> std::result::Result<ModelParams<Q>, E> {
        let mut aea = |prefix: &str, p: &'a AeaParams<P>| -> std::result::Result<AeaParams<Q>, E> {
            Ok(AeaParams {
                q: p.q.try_map_named(&format!("{prefix}.q"), &mut f)?,
                k: p.k.try_map_named(&format!("{prefix}.k"), &mut f)?,
                v: p.v.try_map_named(&format!("{prefix}.v"), &mut f)?,
            })
        };
        let caea = aea("caea", &self.caea)?;
        let saea = aea("saea", &self.saea)?;
        let ha = HaParams {
            cc1: self.ha.cc1.try_map_named("ha.cc1", &mut f)?,
            ss1: self.ha.ss1.try_map_named("ha.ss1", &mut f)?,
            ss2: self.ha.ss2.try_map_named("ha.ss2", &mut f)?,
        };
        let convs = self
            .decoder
            .convs
            .iter()
            .enumerate()
            .map(|(i, c)| c.try_map_named(&format!("decoder.conv_{}", i + 1), &mut f))
            .collect::<std::result::Result<_, E>>()?;
        Ok(ModelParams { config: self.config, caea, saea, ha, decoder: DecoderParams { convs } })
    }

    pub fn map_named<'a, Q>(&'a self, mut f: impl FnMut(&str, &'a P) -> Q) -> ModelParams<Q> {
        match self.try_map_named(|n, p| Ok::<_, Infallible>(f(n, p))) {
            Ok(m) => m,
            Err(never) => match never {},
        }
    }

    pub fn for_each_named<'a>(&'a self, mut f: impl FnMut(&str, &'a P)) {
        self.map_named(|n, p| f(n, p));
    }

    /// Mutable slots in schema order.
    pub fn slots_mut(&mut self) -> Vec<&mut P> {
        let mut out = Vec::new();
        for aea in [&mut self.caea, &mut self.saea] {
            for conv in [&mut aea.q, &mut aea.k, &mut aea.v] {
                out.push(&mut conv.weight);
                out.push(&mut conv.bias);
            }
        }
        for conv in [&mut self.ha.cc1, &mut self.ha.ss1, &mut self.ha.ss2] {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
        }
        for conv in &mut self.decoder.convs {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
        }
        out
    }

    /// All slots in schema order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        self.for_each_named(|n, p| out.push((n.to_string(), p)));
        out
    }

    /// Pairs slots of two structures with the same layout.
    pub fn zip_map<R, Q>(&self, other: &ModelParams<R>, mut f: impl FnMut(&str, &P, &R) -> Q) -> ModelParams<Q> {
        let others = other.named();
        let mut idx = 0;
        self.map_named(|n, p| {
            let (_, r) = others[idx];
            idx += 1;
            f(n, p, r)
        })
    }
}

impl ModelParams<Vec<usize>> {
    /// Expected shape of every parameter.
    pub fn shapes(config: ModelConfig) -> Self {
        let c = config.arch.feature_channels();
        let pointwise = || ConvParams { weight: vec![c, c, 1, 1], bias: vec![c] };
        let aea = || AeaParams { q: pointwise(), k: pointwise(), v: pointwise() };
        ModelParams {
            config,
            caea: aea(),
            saea: aea(),
            ha: HaParams { cc1: pointwise(), ss1: pointwise(), ss2: pointwise() },
            decoder: DecoderParams {
                convs: decoder_channels(config.arch)
                    .iter()
                    .map(|&(cin, cout)| ConvParams { weight: vec![cout, cin, 3, 3], bias: vec![cout] })
                    .collect(),
            },
        }
    }
}

impl ModelParams<Tensor<f32>> {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)`, for
    /// every weight and bias.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = ModelParams::shapes(config);
        let mut fan_in = 1;
        shapes.map_named(|name, shape| {
            if name.ends_with(".weight") {
                fan_in = shape[1..].iter().product();
            }
            let bound = 1.0 / (fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            Tensor::from_fn(shape.clone(), |_| dist.sample(&mut rng))
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.map_named(|_, t| Tensor::zeros(t.shape().to_vec()))
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_vars<T: Element>(&self, mut wrap: impl FnMut(Tensor<T>) -> Var<T>) -> ModelParams<Var<T>> {
        self.map_named(|_, t| wrap(t.cast()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_names_are_stable() {
        let shapes = ModelParams::shapes(ModelConfig::default());
        let names: Vec<String> = shapes.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 2 * 6 + 6 + 18);
        assert_eq!(names[0], "caea.q.weight");
        assert!(names.contains(&"ha.cc1.bias".to_string()));
        assert_eq!(names.last().unwrap(), "decoder.conv_9.bias");
        let mut slots = shapes.clone();
        let by_slot: Vec<Vec<usize>> = slots.slots_mut().into_iter().map(|s| s.clone()).collect();
        let by_name: Vec<Vec<usize>> = shapes.named().into_iter().map(|(_, s)| s.clone()).collect();
        assert_eq!(by_slot, by_name);
    }

    #[test]
    fn decoder_mirrors_encoder_widths() {
        let ch = decoder_channels(Arch::STANDARD);
        assert_eq!(ch[0], (512, 256));
        assert_eq!(ch[8], (64, 3));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::with_arch(Arch { base_width: 2 });
        let a = ModelParams::init(cfg, 5);
        assert_eq!(a, ModelParams::init(cfg, 5));
        assert_ne!(a, ModelParams::init(cfg, 6));
        let w = &a.decoder.convs[0].weight;
        let bound = 1.0 / ((16 * 9) as f32).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }
}
