//! Checkpoint files: model parameters, Adam moments and run metadata in one
//! named-tensor file.
//!
//! Schema:
//! - tensors `<param>` for every [`ModelParams`] slot (e.g. `caea.q.weight`),
//!   plus `adam.m.<param>` and `adam.v.<param>`;
//! - metadata `format`, `iteration`, `adam_step`, `model_config` (JSON) and,
//!   when written by the trainer, `train_config` (JSON).

use std::path::Path;

use crate::error::{Result, StylerError};
use crate::optim::AdamState;
use crate::params::{ModelConfig, ModelParams};
use crate::tensor_io::NamedTensors;
use crate::train::TrainConfig;

pub const FORMAT: &str = "styler-checkpoint-1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub optimizer: AdamState,
    /// Number of completed training iterations.
    pub iteration: u64,
    pub train_config: Option<TrainConfig>,
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| StylerError::Argument(e.to_string()))
}

fn parse_meta<T: std::str::FromStr>(named: &NamedTensors, key: &str) -> Result<T> {
    named
        .meta(key)?
        .parse()
        .map_err(|_| StylerError::schema(key, "malformed metadata value"))
}

impl Checkpoint {
    /// A fresh checkpoint with zeroed optimizer state.
    pub fn initial(model: ModelParams, train_config: Option<TrainConfig>) -> Self {
        let optimizer = AdamState::new(&model);
        Self { model, optimizer, iteration: 0, train_config }
    }

    pub fn to_named(&self) -> Result<NamedTensors> {
        let mut named = NamedTensors::default();
        for (name, t) in self.model.named() {
            named.insert(name, t.clone());
        }
        for (name, t) in self.optimizer.m.named() {
            named.insert(format!("adam.m.{name}"), t.clone());
        }
        for (name, t) in self.optimizer.v.named() {
            named.insert(format!("adam.v.{name}"), t.clone());
        }
        let meta = &mut named.metadata;
        meta.insert("format".into(), FORMAT.into());
        meta.insert("iteration".into(), self.iteration.to_string());
        meta.insert("adam_step".into(), self.optimizer.step.to_string());
        meta.insert("model_config".into(), to_json(&self.model.config)?);
        if let Some(cfg) = &self.train_config {
            meta.insert("train_config".into(), to_json(cfg)?);
        }
        Ok(named)
    }

    /// Rebuilds a checkpoint, validating every entry before returning.
    ///
    /// With `expected`, tensors must have that config's shapes, so a file
    /// from a different channel width fails naming the first mismatched
    /// entry.
    pub fn from_named(mut named: NamedTensors, expected: Option<ModelConfig>) -> Result<Self> {
        let format = named.meta("format")?;
        if format != FORMAT {
            return Err(StylerError::schema("format", format!("unsupported checkpoint format {format:?}")));
        }
        let stored: ModelConfig = serde_json::from_str(named.meta("model_config")?)
            .map_err(|e| StylerError::schema("model_config", e.to_string()))?;
        let config = expected.unwrap_or(stored);
        let iteration: u64 = parse_meta(&named, "iteration")?;
        let step: u64 = parse_meta(&named, "adam_step")?;
        let train_config = match named.metadata.get("train_config") {
            Some(s) => Some(serde_json::from_str(s).map_err(|e| StylerError::schema("train_config", e.to_string()))?),
            None => None,
        };

        let shapes = ModelParams::shapes(config);
        let model = shapes.try_map_named(|name, shape| named.take(name, shape))?;
        let m = shapes.try_map_named(|name, shape| named.take(&format!("adam.m.{name}"), shape))?;
        let v = shapes.try_map_named(|name, shape| named.take(&format!("adam.v.{name}"), shape))?;
        if let Some(extra) = named.tensors.keys().next() {
            return Err(StylerError::schema(extra.clone(), "unexpected entry"));
        }
        if stored != config {
            return Err(StylerError::schema(
                "model_config",
                format!("checkpoint was trained with {stored:?}, expected {config:?}"),
            ));
        }
        let mut model = model;
        model.config = config;
        Ok(Self { model, optimizer: AdamState { step, m, v }, iteration, train_config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_named()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_named(NamedTensors::read(path)?, None)
    }

    pub fn load_expecting(path: impl AsRef<Path>, expected: ModelConfig) -> Result<Self> {
        Self::from_named(NamedTensors::read(path)?, Some(expected))
    }
}
