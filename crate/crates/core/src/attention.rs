//! Affinity-enhanced self-attention with detail enhancement, and the hybrid
//! cross-attention that redistributes style features over content positions.
//!
//! Feature maps are `[N, C, H, W]`; attention works on flattened
//! `[N, P, C]` matrices (row = spatial position, column = channel) with
//! `P = H·W`. No `1/√d` temperature is applied anywhere.

use styler_grad::{Element, Var};

use crate::error::{Result, StylerError};
use crate::params::{AeaParams, HaParams};

/// Added under the square root of the detail weight.
pub const EPS_SQRT: f64 = 1e-12;
/// Variance floor of mean–variance normalization.
pub const EPS_NORM: f64 = 1e-5;

/// `[N, C, H, W] -> [N, H·W, C]`.
pub fn flatten<T: Element>(f: &Var<T>) -> Result<Var<T>> {
    let (n, c, h, w) = f.value().dims4("flatten")?;
    Ok(f.reshape([n, c, h * w])?.transpose12()?)
}

/// Inverse of [`flatten`].
pub fn unflatten<T: Element>(x: &Var<T>, h: usize, w: usize) -> Result<Var<T>> {
    let (n, p, c) = x.value().dims3("unflatten")?;
    if p != h * w {
        return Err(StylerError::Dimension(format!("{p} positions cannot form a {h}x{w} map")));
    }
    Ok(x.transpose12()?.reshape([n, c, h, w])?)
}

/// Per-channel mean–variance normalization of a flattened `[N, P, C]` feature.
fn normalize_flat<T: Element>(x: &Var<T>) -> Result<Var<T>> {
    Ok(x.transpose12()?.instance_norm(T::from_f64_lossy(EPS_NORM))?.transpose12()?)
}

/// `Softmax(Q Kᵀ)` with the softmax over key positions: `[N, Pq, Pk]`.
pub fn attention_weights<T: Element>(q: &Var<T>, k: &Var<T>) -> Result<Var<T>> {
    let (nq, _, cq) = q.value().dims3("attention")?;
    let (nk, _, ck) = k.value().dims3("attention")?;
    if nq != nk || cq != ck {
        return Err(StylerError::Dimension(format!(
            "query {:?} and key {:?} must share batch and channel counts",
            q.shape(),
            k.shape()
        )));
    }
    Ok(q.bmm(k, false, true)?.softmax_last()?)
}

/// `Softmax(Q Kᵀ) V` over flattened `[N, P, C]` operands.
pub fn softmax_attention<T: Element>(q: &Var<T>, k: &Var<T>, v: &Var<T>) -> Result<Var<T>> {
    let (nk, pk, _) = k.value().dims3("attention")?;
    let (nv, pv, _) = v.value().dims3("attention")?;
    if nk != nv || pk != pv {
        return Err(StylerError::Dimension(format!(
            "key {:?} and value {:?} must share batch and position counts",
            k.shape(),
            v.shape()
        )));
    }
    Ok(attention_weights(q, k)?.bmm(v, false, false)?)
}

/// Intermediate products of the affinity map, kept for inspection.
#[derive(Clone, Debug)]
pub struct AffinityParts<T: Element> {
    /// `Softmax(F_qᵀ F_k)`, `[N, P, P]`.
    pub query_key: Var<T>,
    /// `Softmax(F_qᵀ F_q)`, `[N, P, P]`.
    pub query_query: Var<T>,
    /// Attended values `A`, `[N, P, C]`.
    pub attended: Var<T>,
    /// `F_aff`, `[N, P, C]`.
    pub affinity: Var<T>,
    /// Flattened value projection `F_v`, `[N, P, C]`.
    pub value: Var<T>,
}

fn check_channels<T: Element>(f: &Var<T>, weight: &Var<T>, what: &str) -> Result<()> {
    let (_, c, _, _) = f.value().dims4("attention")?;
    let expected = weight.shape()[1];
    if c != expected {
        return Err(StylerError::Dimension(format!(
            "{what} feature has {c} channels, parameters expect {expected}"
        )));
    }
    Ok(())
}

pub fn affinity_parts<T: Element>(f: &Var<T>, params: &AeaParams<Var<T>>) -> Result<AffinityParts<T>> {
    check_channels(f, &params.q.weight, "attention input")?;
    let q = flatten(&params.q.apply(f, 0)?)?;
    let k = flatten(&params.k.apply(f, 0)?)?;
    let v = flatten(&params.v.apply(f, 0)?)?;
    let query_key = attention_weights(&q, &k)?;
    let attended = query_key.bmm(&v, false, false)?;
    let query_query = attention_weights(&q, &q)?;
    let affinity = query_query.bmm(&attended, false, false)?;
    Ok(AffinityParts { query_key, query_query, attended, affinity, value: v })
}

/// Returns `(F_aff, F_v)`, both flattened `[N, P, C]`:
/// `A = Softmax(F_qᵀF_k)·F_vᵀ`, `F_aff = Softmax(F_qᵀF_q)·A`.
pub fn affinity_map<T: Element>(f: &Var<T>, params: &AeaParams<Var<T>>) -> Result<(Var<T>, Var<T>)> {
    let parts = affinity_parts(f, params)?;
    Ok((parts.affinity, parts.value))
}

/// `M = sqrt(ReLU(F_aff − F_aff²) + ε)`, elementwise.
pub fn detail_weight<T: Element>(affinity: &Var<T>) -> Result<Var<T>> {
    Ok(affinity
        .sub(&affinity.square())?
        .relu()
        .add_scalar(T::from_f64_lossy(EPS_SQRT))
        .sqrt())
}

/// `M ⊙ Norm(F_v) + F_aff`, reshaped back to `[N, C, h, w]`.
pub fn detail_enhance<T: Element>(affinity: &Var<T>, value: &Var<T>, h: usize, w: usize) -> Result<Var<T>> {
    if affinity.shape() != value.shape() {
        return Err(StylerError::Dimension(format!(
            "affinity {:?} and value {:?} must have identical shapes",
            affinity.shape(),
            value.shape()
        )));
    }
    let m = detail_weight(affinity)?;
    let enhanced = m.mul(&normalize_flat(value)?)?.add(affinity)?;
    unflatten(&enhanced, h, w)
}

/// One affinity-enhanced attention block; output shape equals input shape.
pub fn aea_forward<T: Element>(f: &Var<T>, params: &AeaParams<Var<T>>) -> Result<Var<T>> {
    let (_, _, h, w) = f.value().dims4("aea_forward")?;
    let (affinity, value) = affinity_map(f, params)?;
    detail_enhance(&affinity, &value, h, w)
}

/// Hybrid attention output together with its `[N, P_c, P_s]` weights.
pub fn hybrid_attention_parts<T: Element>(
    content: &Var<T>,
    style: &Var<T>,
    params: &HaParams<Var<T>>,
    normalize_value: bool,
) -> Result<(Var<T>, Var<T>)> {
    let (nc, cc, h, w) = content.value().dims4("hybrid_attention")?;
    let (ns, cs, _, _) = style.value().dims4("hybrid_attention")?;
    if cc != cs || nc != ns {
        return Err(StylerError::Dimension(format!(
            "content {:?} and style {:?} must share batch and channel counts",
            content.shape(),
            style.shape()
        )));
    }
    check_channels(content, &params.cc1.weight, "content")?;
    let eps = T::from_f64_lossy(EPS_NORM);
    let q = flatten(&params.cc1.apply(&content.instance_norm(eps)?, 0)?)?;
    let k = flatten(&params.ss1.apply(&style.instance_norm(eps)?, 0)?)?;
    let value_in = if normalize_value { style.instance_norm(eps)? } else { style.clone() };
    let v = flatten(&params.ss2.apply(&value_in, 0)?)?;
    let weights = attention_weights(&q, &k)?;
    let mixed = unflatten(&weights.bmm(&v, false, false)?, h, w)?;
    Ok((mixed.add(content)?, weights))
}

/// `F_ss2 · Softmax(F_cc1ᵀ F_ss1)ᵀ + F_cc` at the content's spatial size.
pub fn hybrid_attention<T: Element>(
    content: &Var<T>,
    style: &Var<T>,
    params: &HaParams<Var<T>>,
    normalize_value: bool,
) -> Result<Var<T>> {
    Ok(hybrid_attention_parts(content, style, params, normalize_value)?.0)
}
