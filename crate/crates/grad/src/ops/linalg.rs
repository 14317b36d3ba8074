use crate::element::{gemm, Element};
use crate::error::{shape_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

#[allow(clippy::too_many_arguments)]
fn batched_gemm<T: Element>(
    ta: bool,
    tb: bool,
    batch: usize,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * m * n];
    for i in 0..batch {
        gemm(
            ta,
            tb,
            m,
            n,
            k,
            T::one(),
            &a[i * m * k..(i + 1) * m * k],
            &b[i * k * n..(i + 1) * k * n],
            T::zero(),
            &mut out[i * m * n..(i + 1) * m * n],
        );
    }
    out
}

impl<T: Element> Var<T> {
    /// Batched matrix product `op(self) · op(other)` over `[B, ·, ·]` operands,
    /// where `op` transposes the last two axes when the flag is set.
    pub fn bmm(&self, other: &Var<T>, trans_a: bool, trans_b: bool) -> Result<Var<T>> {
        let (ba, ra, ca) = self.value().dims3("bmm")?;
        let (bb, rb, cb) = other.value().dims3("bmm")?;
        let (m, ka) = if trans_a { (ca, ra) } else { (ra, ca) };
        let (kb, n) = if trans_b { (cb, rb) } else { (rb, cb) };
        if ba != bb || ka != kb {
            return shape_err(
                "bmm",
                format!(
                    "cannot multiply {:?}{} by {:?}{}",
                    self.shape(),
                    if trans_a { "ᵀ" } else { "" },
                    other.shape(),
                    if trans_b { "ᵀ" } else { "" }
                ),
            );
        }
        let (batch, k) = (ba, ka);
        let value = Tensor::new(
            [batch, m, n],
            batched_gemm(trans_a, trans_b, batch, m, n, k, self.value().data(), other.value().data()),
        )?;
        let (a, b) = (self.value().clone(), other.value().clone());
        let (a_shape, b_shape) = (a.shape().to_vec(), b.shape().to_vec());
        Ok(Var::record(value, &[self, other], move |g, needs| {
            let g = g.data();
            let ga = needs[0].then(|| {
                let data = if !trans_a {
                    batched_gemm(false, !trans_b, batch, m, k, n, g, b.data())
                } else {
                    batched_gemm(trans_b, true, batch, k, m, n, b.data(), g)
                };
                Tensor::new(a_shape.clone(), data).expect("grad shape")
            });
            let gb = needs[1].then(|| {
                let data = if !trans_b {
                    batched_gemm(!trans_a, false, batch, k, n, m, a.data(), g)
                } else {
                    batched_gemm(true, trans_a, batch, n, k, m, g, a.data())
                };
                Tensor::new(b_shape.clone(), data).expect("grad shape")
            });
            vec![ga, gb]
        }))
    }
}
