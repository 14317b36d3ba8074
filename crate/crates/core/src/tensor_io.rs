//! Named-tensor files in the safetensors layout.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use styler_grad::Tensor;

use crate::error::{Result, StylerError};
use crate::fsutil::write_bytes_atomic;

/// A flat name → tensor map plus free-form string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedTensors {
    pub tensors: BTreeMap<String, Tensor<f32>>,
    pub metadata: BTreeMap<String, String>,
}

impl NamedTensors {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.insert(name.into(), tensor);
    }

    /// Removes and returns `name`, checking its shape.
    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| StylerError::schema(name, format!("{name} absent")))?;
        if t.shape() != shape {
            return Err(StylerError::schema(
                name,
                format!("shape mismatch: expected {shape:?}, found {:?}", t.shape()),
            ));
        }
        Ok(t)
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| StylerError::schema(key, "metadata entry absent"))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let buffers: Vec<(String, Vec<u8>, Vec<usize>)> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let bytes = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                (name.clone(), bytes, t.shape().to_vec())
            })
            .collect();
        let views = buffers
            .iter()
            .map(|(name, bytes, shape)| {
                TensorView::new(Dtype::F32, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| StylerError::schema(name.clone(), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let meta: Option<HashMap<String, String>> =
            (!self.metadata.is_empty()).then(|| self.metadata.clone().into_iter().collect());
        safetensors::serialize(views, &meta).map_err(|e| StylerError::schema("<file>", e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: safetensors::SafeTensorError| StylerError::schema("<file>", format!("unreadable tensor file: {e}"));
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(corrupt)?;
        let st = SafeTensors::deserialize(bytes).map_err(corrupt)?;
        let mut out = NamedTensors::default();
        if let Some(meta) = header.metadata() {
            out.metadata = meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        }
        for (name, view) in st.tensors() {
            let data: Vec<f32> = match view.dtype() {
                Dtype::F32 => view.data().chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect(),
                Dtype::F64 => view
                    .data()
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")) as f32)
                    .collect(),
                other => {
                    return Err(StylerError::schema(name, format!("unsupported dtype {other:?}")));
                }
            };
            out.tensors.insert(name, Tensor::new(view.shape().to_vec(), data)?);
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| StylerError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Atomic write; see [`crate::fsutil::write_atomic`].
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes_atomic(path.as_ref(), &self.to_bytes()?)
    }
}
