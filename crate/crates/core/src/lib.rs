//! Arbitrary style transfer with affinity-enhanced and hybrid attention.

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod image;
pub mod losses;
pub mod model;
pub mod optim;
pub mod params;
pub mod ssim;
pub mod tensor_io;
pub mod train;
pub mod vgg;

pub use checkpoint::Checkpoint;
pub use error::{Result, StylerError};
pub use eval::{EvalReport, StyleModel};
pub use image::{Image, ImageFormat};
pub use losses::{LossBreakdown, LossWeights};
pub use model::{stylize, Stylizer};
pub use params::{ModelConfig, ModelParams};
pub use train::{LdMode, TrainConfig};
pub use vgg::{Arch, FeaturePyramid, Tap, VggWeights};
