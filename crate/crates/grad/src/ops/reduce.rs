use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// `(N·C, P)` view dimensions of an `[N, C, ...]` tensor.
fn channel_rows<T: Element>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 3 {
        return shape_err(op, format!("expected [N, C, ...], got {s:?}"));
    }
    let p: usize = s[2..].iter().product();
    if p == 0 {
        return shape_err(op, format!("no spatial positions in {s:?}"));
    }
    Ok((s[0], s[1], p))
}

fn mean_var<T: Element>(row: &[T]) -> (T, T) {
    let p = T::from_usize(row.len()).expect("length fits");
    let mean = row.iter().copied().sum::<T>() / p;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / p;
    (mean, var)
}

impl<T: Element> Var<T> {
    pub fn sum_all(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        Var::record(Tensor::scalar(self.value().sum()), &[self], move |g, _| {
            vec![Some(Tensor::full(shape.clone(), g.data()[0]))]
        })
    }

    pub fn mean_all(&self) -> Var<T> {
        let n = T::from_usize(self.value().numel().max(1)).expect("length fits");
        self.sum_all().mul_scalar(T::one() / n)
    }

    /// Softmax along the last axis.
    pub fn softmax_last(&self) -> Result<Var<T>> {
        let Some(&cols) = self.shape().last() else {
            return shape_err("softmax_last", "scalar input");
        };
        if cols == 0 {
            return shape_err("softmax_last", "empty last axis");
        }
        let mut y = self.value().clone();
        for row in y.data_mut().chunks_mut(cols) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let saved = y.clone();
        Ok(Var::record(y, &[self], move |g, _| {
            let mut gx = g.clone();
            for (grow, yrow) in gx.data_mut().chunks_mut(cols).zip(saved.data().chunks(cols)) {
                let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                for (gv, &yv) in grow.iter_mut().zip(yrow) {
                    *gv = yv * (*gv - dot);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Euclidean norm of each leading-axis slice: `[N, ...] -> [N]`.
    ///
    /// The gradient at a zero slice is taken as zero.
    pub fn norm_per_sample(&self) -> Result<Var<T>> {
        let Some(&n) = self.shape().first() else {
            return shape_err("norm_per_sample", "scalar input");
        };
        let inner = if n == 0 { 0 } else { self.value().numel() / n };
        let norms: Vec<T> = if inner == 0 {
            vec![T::zero(); n]
        } else {
            self.value()
                .data()
                .chunks(inner)
                .map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt())
                .collect()
        };
        let x = self.value().clone();
        let saved = norms.clone();
        Ok(Var::record(Tensor::new([n], norms)?, &[self], move |g, _| {
            let mut gx = x.clone();
            if inner > 0 {
                for ((row, &r), &gv) in gx.data_mut().chunks_mut(inner).zip(&saved).zip(g.data()) {
                    let scale = if r > T::zero() { gv / r } else { T::zero() };
                    for v in row {
                        *v = *v * scale;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Per-channel mean over spatial positions: `[N, C, ...] -> [N, C]`.
    pub fn channel_mean(&self) -> Result<Var<T>> {
        let (n, c, p) = channel_rows("channel_mean", self.value())?;
        let means: Vec<T> = self.value().data().chunks(p).map(|r| mean_var(r).0).collect();
        let shape = self.shape().to_vec();
        let inv = T::one() / T::from_usize(p).expect("fits");
        Ok(Var::record(Tensor::new([n, c], means)?, &[self], move |g, _| {
            let mut gx = Tensor::zeros(shape.clone());
            for (row, &gv) in gx.data_mut().chunks_mut(p).zip(g.data()) {
                row.fill(gv * inv);
            }
            vec![Some(gx)]
        }))
    }

    /// Per-channel standard deviation `sqrt(var + eps)` (population variance).
    pub fn channel_std(&self, eps: T) -> Result<Var<T>> {
        let (n, c, p) = channel_rows("channel_std", self.value())?;
        let stats: Vec<(T, T)> = self
            .value()
            .data()
            .chunks(p)
            .map(|r| {
                let (m, v) = mean_var(r);
                (m, (v + eps).sqrt())
            })
            .collect();
        let value = Tensor::new([n, c], stats.iter().map(|s| s.1).collect())?;
        let x = self.value().clone();
        let pf = T::from_usize(p).expect("fits");
        Ok(Var::record(value, &[self], move |g, _| {
            let mut gx = x.clone();
            for ((row, &(m, s)), &gv) in gx.data_mut().chunks_mut(p).zip(&stats).zip(g.data()) {
                let k = gv / (pf * s);
                for v in row {
                    *v = (*v - m) * k;
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Mean–variance normalization of each channel across spatial positions.
    pub fn instance_norm(&self, eps: T) -> Result<Var<T>> {
        let (_, _, p) = channel_rows("instance_norm", self.value())?;
        let mut y = self.value().clone();
        let mut inv_std = Vec::with_capacity(y.numel() / p);
        for row in y.data_mut().chunks_mut(p) {
            let (m, v) = mean_var(row);
            let is = T::one() / (v + eps).sqrt();
            inv_std.push(is);
            for x in row.iter_mut() {
                *x = (*x - m) * is;
            }
        }
        let saved = y.clone();
        let pf = T::from_usize(p).expect("fits");
        Ok(Var::record(y, &[self], move |g, _| {
            let mut gx = g.clone();
            for ((grow, yrow), &is) in gx.data_mut().chunks_mut(p).zip(saved.data().chunks(p)).zip(&inv_std) {
                let mean_g = grow.iter().copied().sum::<T>() / pf;
                let mean_gy = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum::<T>() / pf;
                for (gv, &yv) in grow.iter_mut().zip(yrow) {
                    *gv = is * (*gv - mean_g - yv * mean_gy);
                }
            }
            vec![Some(gx)]
        }))
    }
}
