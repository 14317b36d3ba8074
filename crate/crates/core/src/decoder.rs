use styler_grad::{Element, Var};

use crate::error::{Result, StylerError};
use crate::params::DecoderParams;

/// Layers after which the decoder doubles the spatial size.
const UPSAMPLE_AFTER: [usize; 3] = [0, 4, 6];

/// Unclamped decoder output `[N, 3, 8H, 8W]` for `relu4_1`-level features.
///
/// Every convolution is 3×3 with reflection padding and is followed by a
/// ReLU, except the final linear RGB projection.
pub fn decode_raw<T: Element>(f: &Var<T>, params: &DecoderParams<Var<T>>) -> Result<Var<T>> {
    let (_, c, _, _) = f.value().dims4("decode")?;
    let first = params
        .convs
        .first()
        .ok_or_else(|| StylerError::Dimension("decoder has no layers".into()))?;
    let expected = first.weight.shape()[1];
    if c != expected {
        return Err(StylerError::Dimension(format!(
            "decoder expects {expected}-channel features, got {c}"
        )));
    }
    let last = params.convs.len() - 1;
    let mut x = f.clone();
    for (i, conv) in params.convs.iter().enumerate() {
        x = conv.apply(&x, 1)?;
        if i != last {
            x = x.relu();
        }
        if UPSAMPLE_AFTER.contains(&i) {
            x = x.upsample_nearest2()?;
        }
    }
    Ok(x)
}

/// Decoder output clamped to `[0, 1]`.
pub fn decode<T: Element>(f: &Var<T>, params: &DecoderParams<Var<T>>) -> Result<Var<T>> {
    Ok(decode_raw(f, params)?.clamp(T::zero(), T::one()))
}
