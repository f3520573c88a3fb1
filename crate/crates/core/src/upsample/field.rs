use crate::error::{shape_err, Result};
use crate::tensor::{Element, Tensor};

/// Spatial grid of reassembly kernels, `(n, k_up^2, H', W')`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField<T: Element = f64> {
    pub kernels: Tensor<T>,
    /// Every per-location channel vector is a softmax output (or a convex
    /// blend of such).
    pub normalized: bool,
}

impl<T: Element> KernelField<T> {
    pub fn new(kernels: Tensor<T>, normalized: bool) -> Self {
        KernelField {
            kernels,
            normalized,
        }
    }

    /// Largest `|sum - 1|` over locations and most negative entry.
    pub fn normalization_error(&self) -> (f64, f64) {
        let s = self.kernels.shape();
        let mut worst_sum = 0.0f64;
        let mut min_entry = f64::INFINITY;
        for n in 0..s.n {
            for p in 0..s.plane() {
                let mut sum = 0.0;
                for c in 0..s.c {
                    let v = self.kernels.plane(n, c)[p].to_f64();
                    sum += v;
                    min_entry = min_entry.min(v);
                }
                worst_sum = worst_sum.max((sum - 1.0).abs());
            }
        }
        (worst_sum, min_entry)
    }
}

/// Per-output-pixel sampling displacements `(n, 2, sigma*H, sigma*W)` in
/// source-grid pixels; channel 0 is dx (width), channel 1 is dy (height).
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField<T: Element = f64> {
    pub offsets: Tensor<T>,
}

impl<T: Element> OffsetField<T> {
    pub fn new(offsets: Tensor<T>) -> Result<Self> {
        if offsets.shape().c != 2 {
            return shape_err(format!(
                "offset field needs 2 channels, got {}",
                offsets.shape().c
            ));
        }
        Ok(OffsetField { offsets })
    }

    pub fn zeros(n: usize, h: usize, w: usize) -> Self {
        OffsetField {
            offsets: Tensor::zeros((n, 2, h, w)),
        }
    }
}
