//! Training objective: content, style, identity and the two
//! local-dissimilarity consistency terms.
//!
//! Every distance is an unsquared Euclidean norm taken per image over the
//! flattened operand, then averaged over the batch.

use serde::{Deserialize, Serialize};
use styler_grad::{Element, Var};

use crate::attention::EPS_NORM;
use crate::error::{Result, StylerError};
use crate::model::stylize_features_raw;
use crate::params::ModelParams;
use crate::vgg::{FeaturePyramid, Tap, VggWeights};

/// Taps compared by the content and local-dissimilarity content terms.
pub const CONTENT_LAYERS: [Tap; 2] = [Tap::Relu4_1, Tap::Relu5_1];
/// Taps compared by the style, identity and local-dissimilarity style terms.
pub const STYLE_LAYERS: [Tap; 5] = Tap::ALL;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_id1: f64,
    pub lambda_id2: f64,
    pub lambda_cld: f64,
    pub lambda_sld: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_c: 1.0, lambda_s: 5.0, lambda_id1: 1.0, lambda_id2: 50.0, lambda_cld: 1.0, lambda_sld: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("lambda_c", self.lambda_c),
            ("lambda_s", self.lambda_s),
            ("lambda_id1", self.lambda_id1),
            ("lambda_id2", self.lambda_id2),
            ("lambda_cld", self.lambda_cld),
            ("lambda_sld", self.lambda_sld),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(StylerError::config(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// The five raw terms; `identity` already includes its internal weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub content: f64,
    pub style: f64,
    pub identity: f64,
    pub ld_content: f64,
    pub ld_style: f64,
}

impl LossParts {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("content", self.content),
            ("style", self.style),
            ("identity", self.identity),
            ("ld_content", self.ld_content),
            ("ld_style", self.ld_style),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub content: f64,
    pub style: f64,
    pub identity: f64,
    pub ld_content: f64,
    pub ld_style: f64,
    pub total: f64,
}

/// Coefficient of each raw term in the total, in [`LossParts::named`] order.
fn coefficients(w: &LossWeights) -> [f64; 5] {
    [w.lambda_c, w.lambda_s, 1.0, w.lambda_cld, w.lambda_sld]
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<LossBreakdown> {
    let mut total = 0.0;
    for ((term, value), coef) in parts.named().into_iter().zip(coefficients(w)) {
        if !value.is_finite() {
            return Err(StylerError::Numeric { term });
        }
        total += coef * value;
    }
    Ok(LossBreakdown {
        content: parts.content,
        style: parts.style,
        identity: parts.identity,
        ld_content: parts.ld_content,
        ld_style: parts.ld_style,
        total,
    })
}

/// Differentiable counterpart of [`total_loss`] over tape values, in
/// [`LossParts::named`] order.
pub fn weighted_total<T: Element>(terms: [&Var<T>; 5], w: &LossWeights) -> Var<T> {
    let mut total: Option<Var<T>> = None;
    for (term, coef) in terms.into_iter().zip(coefficients(w)) {
        let scaled = term.mul_scalar(T::from_f64_lossy(coef));
        total = Some(match total {
            None => scaled,
            Some(acc) => acc.add(&scaled).expect("scalar terms"),
        });
    }
    total.expect("five terms")
}

/// Per-channel mean and standard deviation `sqrt(var + ε)` over positions,
/// each `[N, C]`.
pub fn feature_stats<T: Element>(f: &Var<T>) -> Result<(Var<T>, Var<T>)> {
    Ok((f.channel_mean()?, f.channel_std(T::from_f64_lossy(EPS_NORM))?))
}

/// Batch mean of `‖a_i − b_i‖₂`.
pub fn mean_distance<T: Element>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    if a.shape() != b.shape() {
        return Err(StylerError::Dimension(format!("cannot compare {:?} with {:?}", a.shape(), b.shape())));
    }
    Ok(a.sub(b)?.norm_per_sample()?.mean_all())
}

/// Batch mean of `‖μ(a_i) − μ(b_i)‖₂ + ‖σ(a_i) − σ(b_i)‖₂`; spatial sizes may differ.
pub fn stat_distance<T: Element>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    let (na, ca) = (a.shape().first().copied(), a.shape().get(1).copied());
    let (nb, cb) = (b.shape().first().copied(), b.shape().get(1).copied());
    if na != nb || ca != cb {
        return Err(StylerError::Dimension(format!(
            "statistics of {:?} and {:?} are not comparable",
            a.shape(),
            b.shape()
        )));
    }
    let (mu_a, sigma_a) = feature_stats(a)?;
    let (mu_b, sigma_b) = feature_stats(b)?;
    Ok(mean_distance(&mu_a, &mu_b)?.add(&mean_distance(&sigma_a, &sigma_b)?)?)
}

fn sum_over<T: Element>(layers: &[Tap], mut term: impl FnMut(Tap) -> Result<Var<T>>) -> Result<Var<T>> {
    let mut acc: Option<Var<T>> = None;
    for &tap in layers {
        let t = term(tap)?;
        acc = Some(match acc {
            None => t,
            Some(a) => a.add(&t)?,
        });
    }
    acc.ok_or_else(|| StylerError::Argument("empty layer set".into()))
}

/// `Σ_layers ‖φ_i(reference) − φ_i(generated)‖₂`.
pub fn content_loss<T: Element>(
    reference: &FeaturePyramid<T>,
    generated: &FeaturePyramid<T>,
    layers: &[Tap],
) -> Result<Var<T>> {
    sum_over(layers, |tap| mean_distance(reference.get(tap), generated.get(tap)))
}

/// `Σ_layers ‖μ(φ_i(generated)) − μ(φ_i(style))‖₂ + ‖σ(·) − σ(·)‖₂`.
pub fn style_loss<T: Element>(
    style: &FeaturePyramid<T>,
    generated: &FeaturePyramid<T>,
    layers: &[Tap],
) -> Result<Var<T>> {
    sum_over(layers, |tap| stat_distance(generated.get(tap), style.get(tap)))
}

fn check_same_batch<T: Element>(a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape().first() != b.shape().first() {
        return Err(StylerError::Dimension(format!(
            "batch sizes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Local-dissimilarity content term over pyramids of two stylizations that
/// share their content images.
pub fn ld_content_from_pyramids<T: Element>(
    first: &FeaturePyramid<T>,
    second: &FeaturePyramid<T>,
    layers: &[Tap],
) -> Result<Var<T>> {
    check_same_batch(first.get(Tap::Relu1_1), second.get(Tap::Relu1_1))?;
    content_loss(first, second, layers)
}

/// Local-dissimilarity style term over pyramids of two stylizations that
/// share their style images.
pub fn ld_style_from_pyramids<T: Element>(first: &FeaturePyramid<T>, second: &FeaturePyramid<T>) -> Result<Var<T>> {
    check_same_batch(first.get(Tap::Relu1_1), second.get(Tap::Relu1_1))?;
    style_loss(second, first, &STYLE_LAYERS)
}

/// [`ld_content_from_pyramids`] on image batches `[N, 3, H, W]`.
pub fn ld_content_loss(first: &Var<f32>, second: &Var<f32>, vgg: &VggWeights) -> Result<Var<f32>> {
    check_same_batch(first, second)?;
    ld_content_from_pyramids(&vgg.encode_batch(first)?, &vgg.encode_batch(second)?, &CONTENT_LAYERS)
}

/// [`ld_style_from_pyramids`] on image batches `[N, 3, H, W]`.
pub fn ld_style_loss(first: &Var<f32>, second: &Var<f32>, vgg: &VggWeights) -> Result<Var<f32>> {
    check_same_batch(first, second)?;
    ld_style_from_pyramids(&vgg.encode_batch(first)?, &vgg.encode_batch(second)?)
}

/// Identity reconstructions and their pyramids, with the originals'.
pub struct IdentityInputs<'a, T: Element> {
    pub content: &'a Var<T>,
    pub content_pyramid: &'a FeaturePyramid<T>,
    pub content_recon: &'a Var<T>,
    pub content_recon_pyramid: &'a FeaturePyramid<T>,
    pub style: &'a Var<T>,
    pub style_pyramid: &'a FeaturePyramid<T>,
    pub style_recon: &'a Var<T>,
    pub style_recon_pyramid: &'a FeaturePyramid<T>,
}

/// `λ_id1(‖I_cc − I_c‖ + ‖I_ss − I_s‖) + λ_id2 Σ_i(‖φ_i(I_cc) − φ_i(I_c)‖ + ‖φ_i(I_ss) − φ_i(I_s)‖)`.
pub fn identity_terms<T: Element>(x: &IdentityInputs<'_, T>, lambda_id1: f64, lambda_id2: f64) -> Result<Var<T>> {
    let pixels = mean_distance(x.content_recon, x.content)?.add(&mean_distance(x.style_recon, x.style)?)?;
    let features = sum_over(&STYLE_LAYERS, |tap| {
        mean_distance(x.content_recon_pyramid.get(tap), x.content_pyramid.get(tap))?
            .add(&mean_distance(x.style_recon_pyramid.get(tap), x.style_pyramid.get(tap))?)
            .map_err(Into::into)
    })?;
    Ok(pixels
        .mul_scalar(T::from_f64_lossy(lambda_id1))
        .add(&features.mul_scalar(T::from_f64_lossy(lambda_id2)))?)
}

/// Identity loss of `model` on content/style batches `[N, 3, H, W]`: each
/// batch is stylized with itself as both content and style (unclamped
/// decoder output, as in training).
pub fn identity_loss(
    model: &ModelParams<Var<f32>>,
    vgg: &VggWeights,
    contents: &Var<f32>,
    styles: &Var<f32>,
    lambda_id1: f64,
    lambda_id2: f64,
) -> Result<Var<f32>> {
    let pc = vgg.encode_batch(contents)?;
    let ps = vgg.encode_batch(styles)?;
    let fc = pc.get(Tap::Relu4_1);
    let fs = ps.get(Tap::Relu4_1);
    let icc = stylize_features_raw(fc, fc, model)?;
    let iss = stylize_features_raw(fs, fs, model)?;
    let (picc, piss) = (vgg.encode_batch(&icc)?, vgg.encode_batch(&iss)?);
    identity_terms(
        &IdentityInputs {
            content: contents,
            content_pyramid: &pc,
            content_recon: &icc,
            content_recon_pyramid: &picc,
            style: styles,
            style_pyramid: &ps,
            style_recon: &iss,
            style_recon_pyramid: &piss,
        },
        lambda_id1,
        lambda_id2,
    )
}
