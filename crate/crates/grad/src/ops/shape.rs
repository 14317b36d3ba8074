use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

fn transpose_batched<T: Element>(x: &Tensor<T>, b: usize, m: usize, n: usize) -> Tensor<T> {
    let src = x.data();
    let mut out = vec![T::zero(); b * m * n];
    for bi in 0..b {
        let s = &src[bi * m * n..(bi + 1) * m * n];
        let d = &mut out[bi * m * n..(bi + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                d[j * m + i] = s[i * n + j];
            }
        }
    }
    Tensor::new([b, n, m], out).expect("sized above")
}

impl<T: Element> Var<T> {
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<T>> {
        let value = self.value().reshape(shape)?;
        let orig = self.shape().to_vec();
        Ok(Var::record(value, &[self], move |g, _| {
            vec![Some(g.reshape(orig.clone()).expect("same numel"))]
        }))
    }

    /// Swap the last two axes of a `[B, M, N]` tensor.
    pub fn transpose12(&self) -> Result<Var<T>> {
        let (b, m, n) = self.value().dims3("transpose12")?;
        let value = transpose_batched(self.value(), b, m, n);
        Ok(Var::record(value, &[self], move |g, _| vec![Some(transpose_batched(g, b, n, m))]))
    }

    /// Gather entries of the leading axis; indices may repeat.
    pub fn select0(&self, indices: &[usize]) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let Some(&lead) = shape.first() else {
            return shape_err("select0", "scalar has no leading axis");
        };
        if let Some(bad) = indices.iter().find(|&&i| i >= lead) {
            return shape_err("select0", format!("index {bad} out of range for {lead}"));
        }
        let inner = if lead == 0 { 0 } else { self.value().numel() / lead };
        let src = self.value().data();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            data.extend_from_slice(&src[i * inner..(i + 1) * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        let value = Tensor::new(out_shape, data)?;
        let indices = indices.to_vec();
        Ok(Var::record(value, &[self], move |g, _| {
            let mut gx = Tensor::zeros(shape.clone());
            let dst = gx.data_mut();
            for (k, &i) in indices.iter().enumerate() {
                for (d, &s) in dst[i * inner..(i + 1) * inner]
                    .iter_mut()
                    .zip(&g.data()[k * inner..(k + 1) * inner])
                {
                    *d += s;
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn narrow0(&self, start: usize, len: usize) -> Result<Var<T>> {
        let value = self.value().narrow0(start, len)?;
        let shape = self.shape().to_vec();
        Ok(Var::record(value, &[self], move |g, _| {
            let inner: usize = shape[1..].iter().product();
            let mut gx = Tensor::zeros(shape.clone());
            gx.data_mut()[start * inner..(start + len) * inner].copy_from_slice(g.data());
            vec![Some(gx)]
        }))
    }

    /// Concatenate along the leading axis.
    pub fn cat0(parts: &[&Var<T>]) -> Result<Var<T>> {
        let values: Vec<Tensor<T>> = parts.iter().map(|p| p.value().clone()).collect();
        let value = Tensor::cat0(&values)?;
        let leads: Vec<usize> = values.iter().map(|v| v.shape()[0]).collect();
        Ok(Var::record(value, parts, move |g, needs| {
            let mut start = 0;
            leads
                .iter()
                .zip(needs)
                .map(|(&len, &need)| {
                    let piece = need.then(|| g.narrow0(start, len).expect("in range"));
                    start += len;
                    piece
                })
                .collect()
        }))
    }
}
