//! Upsampling operators: fixed interpolation baselines, CARAFE, and DLU.

mod carafe;
mod config;
mod dlu;
mod field;
mod interp;
mod reassemble;

pub use carafe::{carafe_forward, carafe_generate_kernels, CarafeParams};
pub use config::UpsampleConfig;
pub use dlu::{dlu_forward, dlu_generate_kernels, expand_kernel_space, DluKernels, DluParams};
pub use field::{KernelField, OffsetField};
pub use interp::{bilinear_upsample, nearest_upsample};
pub use reassemble::reassemble;

pub(crate) use carafe::carafe_forward_metered;
pub(crate) use dlu::{check_expand_shapes, dlu_forward_metered, sampling_cells};
pub(crate) use interp::bilinear_upsample_metered;
pub(crate) use reassemble::check_reassemble_shapes;

/// Standard deviation of the Gaussian used for kernel(-space) generator weights.
pub const GENERATOR_INIT_STD: f64 = 0.001;
