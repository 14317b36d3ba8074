use std::sync::Arc;

use crate::element::Element;
use crate::error::{shape_err, Result};

/// Dense row-major tensor with shared, copy-on-write storage.
///
/// Cloning is cheap; mutation through [`Tensor::data_mut`] copies the
/// buffer only if it is shared.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return shape_err(
                "Tensor::new",
                format!("shape {shape:?} needs {numel} elements, got {}", data.len()),
            );
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self { shape, data: Arc::new(vec![value; numel]) }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: Vec::new(), data: Arc::new(vec![value]) }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self { shape, data: Arc::new((0..numel).map(&mut f).collect()) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return shape_err("Tensor::item", format!("expected one element, shape {:?}", self.shape));
        }
        Ok(self.data[0])
    }

    /// Same storage viewed under a new shape.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return shape_err(
                "Tensor::reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            );
        }
        Ok(Self { shape, data: Arc::clone(&self.data) })
    }

    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => shape_err(op, format!("expected a 4-d tensor, got {:?}", self.shape)),
        }
    }

    pub fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, m, n] => Ok((b, m, n)),
            _ => shape_err(op, format!("expected a 3-d tensor, got {:?}", self.shape)),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: Arc::new(self.data.iter().map(|&x| f(x)).collect()) }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(
                "Tensor::zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            );
        }
        let data = self.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data: Arc::new(data) })
    }

    /// In-place `self += other`; shapes must agree.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return shape_err("Tensor::add_assign", format!("{:?} vs {:?}", self.shape, other.shape));
        }
        for (a, &b) in self.data_mut().iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect()),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return shape_err("Tensor::max_abs_diff", format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Slice `len` entries along the leading axis starting at `start`.
    pub fn narrow0(&self, start: usize, len: usize) -> Result<Self> {
        let Some(&lead) = self.shape.first() else {
            return shape_err("Tensor::narrow0", "scalar has no leading axis");
        };
        if start + len > lead {
            return shape_err("Tensor::narrow0", format!("{start}+{len} exceeds {lead}"));
        }
        let inner = if lead == 0 { 0 } else { self.numel() / lead };
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Self {
            shape,
            data: Arc::new(self.data[start * inner..(start + len) * inner].to_vec()),
        })
    }

    /// Stack along the leading axis; trailing dimensions must agree.
    pub fn cat0(parts: &[Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return shape_err("Tensor::cat0", "no tensors to concatenate");
        };
        if first.rank() == 0 {
            return shape_err("Tensor::cat0", "cannot concatenate scalars");
        }
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.rank() == 0 || &p.shape[1..] != tail {
                return shape_err("Tensor::cat0", format!("{:?} vs {:?}", p.shape, first.shape));
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = lead;
        Ok(Self { shape, data: Arc::new(data) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f32>::new([2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn reshape_shares_and_copy_on_write() {
        let a = Tensor::<f32>::from_fn([2, 3], |i| i as f32);
        let mut b = a.reshape([3, 2]).unwrap();
        b.data_mut()[0] = 100.0;
        assert_eq!(a.data()[0], 0.0);
        assert_eq!(b.data()[0], 100.0);
    }

    #[test]
    fn narrow_and_cat_invert() {
        let a = Tensor::<f64>::from_fn([4, 2], |i| i as f64);
        let parts = [a.narrow0(0, 1).unwrap(), a.narrow0(1, 3).unwrap()];
        assert_eq!(Tensor::cat0(&parts).unwrap(), a);
    }
}
