//! Fixed interpolation upsamplers.

use rayon::prelude::*;

use crate::error::{config_err, Result};
use crate::meter::{tally_flops, FlopMeter};
use crate::sampling::Cell;
use crate::tensor::{Element, Shape, Tensor};

/// `out(i, j) = in(i / sigma, j / sigma)`.
pub fn nearest_upsample<T: Element>(input: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("sigma must be >= 1");
    }
    let s = input.shape();
    let out_shape = Shape::new(s.n, s.c, s.h * sigma, s.w * sigma);
    Ok(Tensor::from_fn(out_shape, |n, c, i, j| {
        input.at(n, c, i / sigma, j / sigma)
    }))
}

/// Half-pixel-centre bilinear upsampling: output `(i, j)` reads the source at
/// `((j + 0.5) / sigma - 0.5, (i + 0.5) / sigma - 0.5)`, clamped to the grid.
pub fn bilinear_upsample<T: Element>(input: &Tensor<T>, sigma: usize) -> Result<Tensor<T>> {
    bilinear_upsample_metered(input, sigma, None)
}

pub(crate) fn bilinear_upsample_metered<T: Element>(
    input: &Tensor<T>,
    sigma: usize,
    meter: Option<&FlopMeter>,
) -> Result<Tensor<T>> {
    if sigma == 0 {
        return config_err("sigma must be >= 1");
    }
    let s = input.shape();
    let out_shape = Shape::new(s.n, s.c, s.h * sigma, s.w * sigma);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let mut out = vec![T::zero(); out_shape.numel()];
    if out.is_empty() {
        return Ok(Tensor::from_parts(out_shape, out));
    }
    let sg = T::from_f64(sigma as f64);
    let half = T::from_f64(0.5);
    let cells: Vec<Cell<T>> = (0..oh * ow)
        .map(|p| {
            let (i, j) = (p / ow, p % ow);
            let y = (T::from_f64(i as f64) + half) / sg - half;
            let x = (T::from_f64(j as f64) + half) / sg - half;
            Cell::locate(x, y, s.h, s.w)
        })
        .collect();
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, c) = (idx / s.c, idx % s.c);
            let plane = input.plane(n, c);
            for (d, cell) in dst.iter_mut().zip(&cells) {
                *d = cell.sample(plane, s.w);
            }
            tally_flops(meter, 9 * oh * ow);
        });
    Ok(Tensor::from_parts(out_shape, out))
}
