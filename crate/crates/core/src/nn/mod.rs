//! Neural building blocks shared by the SR generator and the segmentation
//! U-Net: layers, initialization, the optimizer, and cost accounting.

pub mod adam;
pub mod cost;
pub mod init;
pub mod layers;
pub mod params;

pub use adam::{adam_step, AdamParams, AdamState};
pub use cost::{CostItem, CostReport, LayerSpec};
pub use init::{kaiming_bound, kaiming_uniform};
pub use layers::{Conv2d, LayerNorm, Linear, LAYER_NORM_EPS};
pub use params::ParamStore;
