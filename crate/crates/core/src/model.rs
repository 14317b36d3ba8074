//! End-to-end stylization: encoder → CAEA/SAEA → hybrid attention → decoder.

use styler_grad::{Tensor, Var};

use crate::attention::{aea_forward, hybrid_attention};
use crate::decoder::{decode, decode_raw};
use crate::error::{Result, StylerError};
use crate::image::Image;
use crate::params::ModelParams;
use crate::vgg::{Tap, VggWeights};

/// Content images are reflect-padded to a multiple of this before encoding
/// so the decoder (three 2× stages) returns the original size after cropping.
pub const SIZE_MULTIPLE: usize = 8;

/// Stylized `relu4_1` feature `F_cs = HA(CAEA(F_c), SAEA(F_s))`.
pub fn stylized_features(content: &Var<f32>, style: &Var<f32>, params: &ModelParams<Var<f32>>) -> Result<Var<f32>> {
    let cc = aea_forward(content, &params.caea)?;
    let ss = aea_forward(style, &params.saea)?;
    hybrid_attention(&cc, &ss, &params.ha, params.config.ha_normalize_value)
}

/// `alpha·F_cs + (1 − alpha)·F_c`.
pub fn blend(stylized: &Var<f32>, content: &Var<f32>, alpha: f32) -> Result<Var<f32>> {
    check_alpha(alpha)?;
    Ok(stylized.mul_scalar(alpha).add(&content.mul_scalar(1.0 - alpha))?)
}

pub fn check_alpha(alpha: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(StylerError::Argument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// A loaded model ready for inference: frozen encoder plus trained parameters.
pub struct Stylizer<'a> {
    vgg: &'a VggWeights,
    params: ModelParams<Var<f32>>,
}

impl<'a> Stylizer<'a> {
    pub fn new(vgg: &'a VggWeights, params: &ModelParams) -> Result<Self> {
        if vgg.arch() != params.config.arch {
            return Err(StylerError::Argument(format!(
                "encoder width {} does not match model width {}",
                vgg.arch().base_width,
                params.config.arch.base_width
            )));
        }
        Ok(Self { vgg, params: params.to_vars(Var::constant) })
    }

    fn prepare(&self, content: &Image, style: &Image) -> Result<(Image, Var<f32>, Var<f32>)> {
        let padded = content.pad_to_multiple(SIZE_MULTIPLE)?;
        let fc = self.vgg.encode_batch_to(&Var::constant(padded.to_tensor()), Tap::Relu4_1)?;
        let fs = self.vgg.encode_batch_to(&Var::constant(style.to_tensor()), Tap::Relu4_1)?;
        Ok((padded, fc, fs))
    }

    /// The feature handed to the decoder for the given trade-off.
    pub fn pre_decoder_feature(&self, content: &Image, style: &Image, alpha: f32) -> Result<Tensor<f32>> {
        check_alpha(alpha)?;
        let (_, fc, fs) = self.prepare(content, style)?;
        self.mix(&fc, &fs, alpha).map(Var::into_value)
    }

    fn mix(&self, fc: &Var<f32>, fs: &Var<f32>, alpha: f32) -> Result<Var<f32>> {
        let fcs = stylized_features(fc, fs, &self.params)?;
        blend(&fcs, fc, alpha)
    }

    /// Stylized image at the content image's resolution.
    pub fn stylize(&self, content: &Image, style: &Image, alpha: f32) -> Result<Image> {
        check_alpha(alpha)?;
        let (padded, fc, fs) = self.prepare(content, style)?;
        let feature = self.mix(&fc, &fs, alpha)?;
        let out = Image::from_tensor(decode(&feature, &self.params.decoder)?.value(), 0)?;
        debug_assert_eq!((out.width(), out.height()), (padded.width(), padded.height()));
        out.crop(0, 0, content.width(), content.height())
    }
}

/// One-shot [`Stylizer::stylize`].
pub fn stylize(content: &Image, style: &Image, model: &ModelParams, vgg: &VggWeights, alpha: f32) -> Result<Image> {
    Stylizer::new(vgg, model)?.stylize(content, style, alpha)
}

/// Training-time forward pass over batches of `relu4_1` features: unclamped
/// decoder output for `HA(CAEA(F_c), SAEA(F_s))`.
pub fn stylize_features_raw(content: &Var<f32>, style: &Var<f32>, params: &ModelParams<Var<f32>>) -> Result<Var<f32>> {
    decode_raw(&stylized_features(content, style, params)?, &params.decoder)
}
