use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

fn same_shape<T: Element>(op: &'static str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

impl<T: Element> Var<T> {
    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape("add", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a + b)?;
        Ok(Var::record(value, &[self, other], |g, needs| {
            vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]
        }))
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape("sub", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a - b)?;
        Ok(Var::record(value, &[self, other], |g, needs| {
            vec![needs[0].then(|| g.clone()), needs[1].then(|| g.map(|x| -x))]
        }))
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        same_shape("mul", self, other)?;
        let value = self.value().zip_map(other.value(), |a, b| a * b)?;
        let (a, b) = (self.value().clone(), other.value().clone());
        Ok(Var::record(value, &[self, other], move |g, needs| {
            vec![
                needs[0].then(|| g.zip_map(&b, |g, b| g * b).expect("shape checked")),
                needs[1].then(|| g.zip_map(&a, |g, a| g * a).expect("shape checked")),
            ]
        }))
    }

    pub fn add_scalar(&self, c: T) -> Var<T> {
        Var::record(self.value().map(|x| x + c), &[self], |g, _| vec![Some(g.clone())])
    }

    pub fn mul_scalar(&self, c: T) -> Var<T> {
        Var::record(self.value().map(|x| x * c), &[self], move |g, _| {
            vec![Some(g.map(|x| x * c))]
        })
    }

    pub fn square(&self) -> Var<T> {
        let x = self.value().clone();
        let two = T::one() + T::one();
        Var::record(self.value().map(|v| v * v), &[self], move |g, _| {
            vec![Some(g.zip_map(&x, |g, x| two * g * x).expect("same shape"))]
        })
    }

    pub fn relu(&self) -> Var<T> {
        let y = self.value().map(|x| if x > T::zero() { x } else { T::zero() });
        let mask = y.clone();
        Var::record(y, &[self], move |g, _| {
            vec![Some(
                g.zip_map(&mask, |g, y| if y > T::zero() { g } else { T::zero() })
                    .expect("same shape"),
            )]
        })
    }

    /// Elementwise square root; callers keep the argument strictly positive.
    pub fn sqrt(&self) -> Var<T> {
        let y = self.value().map(T::sqrt);
        let saved = y.clone();
        let half = T::from_f64_lossy(0.5);
        Var::record(y, &[self], move |g, _| {
            vec![Some(g.zip_map(&saved, |g, y| g * half / y).expect("same shape"))]
        })
    }

    /// Clamp to `[lo, hi]`; the gradient passes only where the input was inside.
    pub fn clamp(&self, lo: T, hi: T) -> Var<T> {
        let x = self.value().clone();
        Var::record(self.value().map(|v| v.max(lo).min(hi)), &[self], move |g, _| {
            vec![Some(
                g.zip_map(&x, |g, x| if x >= lo && x <= hi { g } else { T::zero() })
                    .expect("same shape"),
            )]
        })
    }

    /// `y[n, c, ..] = x[n, c, ..] * scale[c] + shift[c]` with constant coefficients.
    pub fn channel_affine(&self, scale: &[T], shift: &[T]) -> Result<Var<T>> {
        let shape = self.shape();
        if shape.len() < 2 || shape[1] != scale.len() || scale.len() != shift.len() {
            return shape_err(
                "channel_affine",
                format!("input {shape:?}, {} scales, {} shifts", scale.len(), shift.len()),
            );
        }
        let c = shape[1];
        let inner: usize = shape[2..].iter().product();
        let mut out = self.value().clone();
        for (i, chunk) in out.data_mut().chunks_mut(inner.max(1)).enumerate() {
            let ch = i % c;
            for v in chunk {
                *v = *v * scale[ch] + shift[ch];
            }
        }
        let scale = scale.to_vec();
        Ok(Var::record(out, &[self], move |g, _| {
            let mut gx: Tensor<T> = g.clone();
            for (i, chunk) in gx.data_mut().chunks_mut(inner.max(1)).enumerate() {
                let s = scale[i % c];
                for v in chunk {
                    *v *= s;
                }
            }
            vec![Some(gx)]
        }))
    }
}
