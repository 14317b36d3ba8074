//! Scalar-arithmetic oracles and fixtures shared by the integration tests.
//!
//! Matrices are `Vec<Vec<f64>>` indexed `[position][channel]`.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use styler_core::params::{AeaParams, ConvParams, HaParams};
use styler_grad::{Tensor, Var};

pub type Mat = Vec<Vec<f64>>;

pub const EPS_NORM: f64 = 1e-5;
pub const EPS_SQRT: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

pub fn random_mat(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

/// A 1×1 convolution as a plain matrix `w[out][in]` and bias.
#[derive(Clone, Debug)]
pub struct Conv1x1 {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Conv1x1 {
    pub fn random(c: usize, scale: f64, bias: (f64, f64), rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: random_mat(c, c, -scale, scale, rng),
            b: (0..c).map(|_| rng.gen_range(bias.0..bias.1)).collect(),
        }
    }

    pub fn identity(c: usize) -> Self {
        Self { w: (0..c).map(|o| (0..c).map(|i| if i == o { 1.0 } else { 0.0 }).collect()).collect(), b: vec![0.0; c] }
    }

    pub fn params(&self) -> ConvParams<Var<f64>> {
        let c_out = self.w.len();
        let c_in = self.w[0].len();
        ConvParams {
            weight: Var::constant(Tensor::new([c_out, c_in, 1, 1], self.w.concat()).unwrap()),
            bias: Var::constant(Tensor::new([c_out], self.b.clone()).unwrap()),
        }
    }

    /// `x[p][in] -> y[p][out]`.
    pub fn apply(&self, x: &Mat) -> Mat {
        x.iter()
            .map(|row| {
                self.w.iter().zip(&self.b).map(|(wr, b)| wr.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + b).collect()
            })
            .collect()
    }
}

pub fn aea_params(q: &Conv1x1, k: &Conv1x1, v: &Conv1x1) -> AeaParams<Var<f64>> {
    AeaParams { q: q.params(), k: k.params(), v: v.params() }
}

pub fn ha_params(cc1: &Conv1x1, ss1: &Conv1x1, ss2: &Conv1x1) -> HaParams<Var<f64>> {
    HaParams { cc1: cc1.params(), ss1: ss1.params(), ss2: ss2.params() }
}

/// `[1, C, H, W]` tensor from `[position][channel]` rows.
pub fn to_feature(x: &Mat, h: usize, w: usize) -> Tensor<f64> {
    let c = x[0].len();
    let mut data = vec![0.0; c * h * w];
    for (p, row) in x.iter().enumerate() {
        for (ch, v) in row.iter().enumerate() {
            data[ch * h * w + p] = *v;
        }
    }
    Tensor::new([1, c, h, w], data).unwrap()
}

/// Rows `[position][channel]` of sample `n` of an `[N, C, H, W]` tensor.
pub fn from_feature(t: &Tensor<f64>, n: usize) -> Mat {
    let s = t.shape();
    let (c, p) = (s[1], s[2] * s[3]);
    let base = n * c * p;
    (0..p).map(|pi| (0..c).map(|ci| t.data()[base + ci * p + pi]).collect()).collect()
}

/// Rows of sample `n` of a flattened `[N, P, C]` tensor.
pub fn from_flat(t: &Tensor<f64>, n: usize) -> Mat {
    let s = t.shape();
    let (p, c) = (s[1], s[2]);
    (0..p).map(|pi| (0..c).map(|ci| t.data()[n * p * c + pi * c + ci]).collect()).collect()
}

pub fn to_flat(x: &Mat) -> Tensor<f64> {
    Tensor::new([1, x.len(), x[0].len()], x.concat()).unwrap()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

pub fn softmax_rows(s: &Mat) -> Mat {
    s.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Per-column mean and population standard deviation `sqrt(var + ε)`.
pub fn column_stats(x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let p = x.len() as f64;
    let c = x[0].len();
    let mut mu = vec![0.0; c];
    let mut sd = vec![0.0; c];
    for j in 0..c {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / p;
        let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / p;
        mu[j] = m;
        sd[j] = (var + EPS_NORM).sqrt();
    }
    (mu, sd)
}

pub fn normalize_columns(x: &Mat) -> Mat {
    let (mu, sd) = column_stats(x);
    x.iter().map(|r| r.iter().enumerate().map(|(j, v)| (v - mu[j]) / sd[j]).collect()).collect()
}

/// `(F_aff, F_v)` for one sample.
pub fn oracle_affinity(x: &Mat, q: &Conv1x1, k: &Conv1x1, v: &Conv1x1) -> (Mat, Mat) {
    let (fq, fk, fv) = (q.apply(x), k.apply(x), v.apply(x));
    let a = matmul(&softmax_rows(&matmul(&fq, &transpose(&fk))), &fv);
    let aff = matmul(&softmax_rows(&matmul(&fq, &transpose(&fq))), &a);
    (aff, fv)
}

pub fn oracle_detail_weight(x: f64) -> f64 {
    ((x - x * x).max(0.0) + EPS_SQRT).sqrt()
}

pub fn oracle_detail(aff: &Mat, value: &Mat) -> Mat {
    let norm = normalize_columns(value);
    aff.iter()
        .zip(&norm)
        .map(|(ar, nr)| ar.iter().zip(nr).map(|(a, n)| oracle_detail_weight(*a) * n + a).collect())
        .collect()
}

pub fn oracle_aea(x: &Mat, q: &Conv1x1, k: &Conv1x1, v: &Conv1x1) -> Mat {
    let (aff, fv) = oracle_affinity(x, q, k, v);
    oracle_detail(&aff, &fv)
}

pub fn oracle_hybrid(content: &Mat, style: &Mat, cc1: &Conv1x1, ss1: &Conv1x1, ss2: &Conv1x1, normalize_value: bool) -> Mat {
    let q = cc1.apply(&normalize_columns(content));
    let k = ss1.apply(&normalize_columns(style));
    let v = if normalize_value { ss2.apply(&normalize_columns(style)) } else { ss2.apply(style) };
    let mixed = matmul(&softmax_rows(&matmul(&q, &transpose(&k))), &v);
    mixed.iter().zip(content).map(|(m, c)| m.iter().zip(c).map(|(a, b)| a + b).collect()).collect()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

/// Per-sample data of an `[N, ...]` tensor as flat vectors.
pub fn samples(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let n = t.shape()[0];
    let per = t.numel() / n;
    (0..n).map(|i| t.data()[i * per..(i + 1) * per].to_vec()).collect()
}

/// Mean over samples of the Euclidean distance between two `[N, ...]` tensors.
pub fn oracle_mean_distance(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (sa, sb) = (samples(a), samples(b));
    sa.iter().zip(&sb).map(|(x, y)| l2(x, y)).sum::<f64>() / sa.len() as f64
}

/// Mean over samples of `‖μa − μb‖ + ‖σa − σb‖` for `[N, C, H, W]` tensors.
pub fn oracle_stat_distance(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let n = a.shape()[0];
    let mut total = 0.0;
    for i in 0..n {
        let (ma, sa) = column_stats(&from_feature(a, i));
        let (mb, sb) = column_stats(&from_feature(b, i));
        total += l2(&ma, &mb) + l2(&sa, &sb);
    }
    total / n as f64
}
