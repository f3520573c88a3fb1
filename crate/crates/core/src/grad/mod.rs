//! Hand-written backward passes and finite-difference verification.

mod check;
mod ops;
mod pipeline;

pub use check::{
    finite_diff_check, finite_diff_check_guarded, finite_diff_check_terms, CheckOptions,
    CheckReport,
};
pub use ops::{conv2d_backward, expand_backward, reassemble_backward, softmax_backward, ConvGrads};
pub use pipeline::{
    carafe_backward, carafe_forward_backward, dlu_backward, dlu_forward_backward, GradBundle,
    LayerGrad,
};
