//! Pixel shuffle between channel blocks and spatial sub-positions.
//!
//! Convention: input channel `g * sigma^2 + s` lands at output channel `g`,
//! position `(sigma * y + s / sigma, sigma * x + s % sigma)` (row-major
//! sub-blocks).

use rayon::prelude::*;

use crate::error::{config_err, shape_err, Result};
use crate::tensor::{Element, Shape, Tensor};

pub fn pixel_shuffle<T: Element>(input: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("pixel_shuffle: sigma must be >= 1");
    }
    let s = input.shape();
    let s2 = sigma * sigma;
    if !s.c.is_multiple_of(s2) {
        return shape_err(format!(
            "pixel_shuffle: {} channels not divisible by sigma^2 = {s2}",
            s.c
        ));
    }
    let out_shape = Shape::new(s.n, s.c / s2, s.h * sigma, s.w * sigma);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let mut out = vec![T::zero(); out_shape.numel()];
    if out_shape.numel() == 0 {
        return Ok(Tensor::from_parts(out_shape, out));
    }
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, g) = (idx / out_shape.c, idx % out_shape.c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let sub = (oy % sigma) * sigma + ox % sigma;
                    dst[oy * ow + ox] = input.at(n, g * s2 + sub, oy / sigma, ox / sigma);
                }
            }
        });
    Ok(Tensor::from_parts(out_shape, out))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Element>(input: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("pixel_unshuffle: sigma must be >= 1");
    }
    let s = input.shape();
    if !s.h.is_multiple_of(sigma) || !s.w.is_multiple_of(sigma) {
        return shape_err(format!(
            "pixel_unshuffle: {}x{} not divisible by {sigma}",
            s.h, s.w
        ));
    }
    let s2 = sigma * sigma;
    let out_shape = Shape::new(s.n, s.c * s2, s.h / sigma, s.w / sigma);
    Ok(Tensor::from_fn(out_shape, |n, c, y, x| {
        let (g, sub) = (c / s2, c % s2);
        input.at(n, g, y * sigma + sub / sigma, x * sigma + sub % sigma)
    }))
}

/// Reshapes raw offsets `(n, 2*sigma^2, h, w)` into `(n, 2, sigma*h, sigma*w)`.
/// Channel pair `(2s, 2s+1)` holds `(dx, dy)` for sub-position `s`.
pub fn shuffle_offsets<T: Element>(raw: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("shuffle_offsets: sigma must be >= 1");
    }
    let s = raw.shape();
    let s2 = sigma * sigma;
    if s.c != 2 * s2 {
        return shape_err(format!(
            "offsets: expected {} channels, got {}",
            2 * s2,
            s.c
        ));
    }
    let out_shape = Shape::new(s.n, 2, s.h * sigma, s.w * sigma);
    Ok(Tensor::from_fn(out_shape, |n, d, oy, ox| {
        let sub = (oy % sigma) * sigma + ox % sigma;
        raw.at(n, 2 * sub + d, oy / sigma, ox / sigma)
    }))
}

/// Inverse of [`shuffle_offsets`].
pub fn unshuffle_offsets<T: Element>(offsets: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("unshuffle_offsets: sigma must be >= 1");
    }
    let s = offsets.shape();
    if s.c != 2 || !s.h.is_multiple_of(sigma) || !s.w.is_multiple_of(sigma) {
        return shape_err(format!(
            "unshuffle_offsets: incompatible shape {s} for sigma {sigma}"
        ));
    }
    let out_shape = Shape::new(s.n, 2 * sigma * sigma, s.h / sigma, s.w / sigma);
    Ok(Tensor::from_fn(out_shape, |n, c, y, x| {
        let (sub, d) = (c / 2, c % 2);
        offsets.at(n, d, y * sigma + sub / sigma, x * sigma + sub % sigma)
    }))
}
