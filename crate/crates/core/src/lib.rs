//! Joint saliency-map and scanpath prediction.
//!
//! A VGG-style encoder feeds an attention-gated bottleneck that is shared by a
//! saliency decoder and a fully convolutional scanpath head ending in a
//! Soft-ArgMax. The crate carries its own tensor/autodiff core, the training
//! losses, the saliency and scanpath metric batteries, dataset I/O and a
//! two-phase trainer.

pub mod attention;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelConfig, SaliencyMap, SalyPath, Scanpath};
pub use tensor::{Graph, Tensor, Var};
