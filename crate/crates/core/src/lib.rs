//! Single-image super-resolution engine built around a residual dense
//! swin-transformer generator, a segmentation U-Net for perceptual losses
//! and evaluation, and a desk-scale training harness over synthetic
//! phantom datasets.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rdst;
pub mod rng;
pub mod swin;
pub mod unet;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DType, Elem, Gradients, Tape, Tensor};
