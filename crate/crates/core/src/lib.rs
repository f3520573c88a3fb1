//! Content-aware feature upsampling operators.
//!
//! The crate provides dense NCHW tensors and the building blocks of two
//! learnable upsamplers, CARAFE and DLU (dynamic lightweight upsampling),
//! together with nearest/bilinear baselines, hand-written backward passes,
//! closed-form parameter/FLOP accounting, and a small synthetic trainer.
//!
//! Upsamplers are exposed both as free functions (`dlu_forward`, ...) and as
//! trait objects selected by name through [`registry::Registry`].

pub mod complexity;
pub mod conv;
pub mod error;
pub mod grad;
pub mod io;
pub mod meter;
pub mod registry;
pub mod rng;
pub mod sampling;
pub mod shuffle;
pub mod softmax;
pub mod tensor;
pub mod train;
pub mod upsample;
pub mod verify;

pub use conv::{conv2d, ConvGeometry, ConvSpec};
pub use error::{Error, Result};
pub use rng::{random_gaussian, random_uniform, Rng};
pub use sampling::bilinear_sample;
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
pub use softmax::channel_softmax;
pub use tensor::{zeros, DType, Element, Shape, Tensor};
pub use upsample::{
    bilinear_upsample, carafe_forward, carafe_generate_kernels, dlu_forward, dlu_generate_kernels,
    expand_kernel_space, nearest_upsample, reassemble, CarafeParams, DluKernels, DluParams,
    KernelField, OffsetField, UpsampleConfig,
};
