//! Adjoints of the individual operators.

use rayon::prelude::*;

use crate::conv::{valid_range, ConvSpec};
use crate::error::{shape_err, Result};
use crate::tensor::{Element, Shape, Tensor};
use crate::upsample::{
    check_expand_shapes, check_reassemble_shapes, sampling_cells, KernelField, OffsetField,
    UpsampleConfig,
};

/// Gradients of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T: Element = f64> {
    pub d_input: Tensor<T>,
    pub d_weights: Tensor<T>,
    pub d_bias: Vec<T>,
}

/// Adjoint of [`crate::conv2d`] under zero "same" padding.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    d_output: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let s = input.shape();
    if s.c != spec.in_channels() {
        return shape_err(format!(
            "conv2d_backward: input has {} channels, layer expects {}",
            s.c,
            spec.in_channels()
        ));
    }
    let out_c = spec.out_channels();
    d_output.expect_shape("conv2d_backward d_output", Shape::new(s.n, out_c, s.h, s.w))?;
    let (h, w, k, pad) = (s.h, s.w, spec.kernel_size(), spec.padding_isize());
    let plane = h * w;
    let x = input.data();
    let dy = d_output.data();
    let wts = spec.weights.data();

    let d_bias: Vec<T> = (0..out_c)
        .into_par_iter()
        .map(|o| {
            let mut acc = T::zero();
            for n in 0..s.n {
                for &g in d_output.plane(n, o) {
                    acc = acc + g;
                }
            }
            acc
        })
        .collect();

    let per_out = s.c * k * k;
    let mut d_weights = vec![T::zero(); out_c * per_out];
    if plane > 0 {
        d_weights
            .par_chunks_mut(per_out.max(1))
            .enumerate()
            .for_each(|(o, dw)| {
                for ic in 0..s.c {
                    for ky in 0..k {
                        let oy = ky as isize - pad;
                        let (y0, y1) = valid_range(h, oy);
                        for kx in 0..k {
                            let ox = kx as isize - pad;
                            let (x0, x1) = valid_range(w, ox);
                            let mut acc = T::zero();
                            for n in 0..s.n {
                                let g = &dy[(n * out_c + o) * plane..(n * out_c + o + 1) * plane];
                                let xi = &x[(n * s.c + ic) * plane..(n * s.c + ic + 1) * plane];
                                for y in y0..y1 {
                                    let sy = (y as isize + oy) as usize;
                                    for xx in x0..x1 {
                                        let sx = (xx as isize + ox) as usize;
                                        acc = acc + g[y * w + xx] * xi[sy * w + sx];
                                    }
                                }
                            }
                            dw[(ic * k + ky) * k + kx] = acc;
                        }
                    }
                }
            });
    }

    let mut d_input = vec![T::zero(); s.numel()];
    if plane > 0 {
        d_input
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, ic) = (idx / s.c, idx % s.c);
                for o in 0..out_c {
                    let g = &dy[(n * out_c + o) * plane..(n * out_c + o + 1) * plane];
                    for ky in 0..k {
                        let oy = ky as isize - pad;
                        // input row y receives from output row y - oy
                        let (y0, y1) = valid_range(h, -oy);
                        for kx in 0..k {
                            let ox = kx as isize - pad;
                            let (x0, x1) = valid_range(w, -ox);
                            let wv = wts[((o * s.c + ic) * k + ky) * k + kx];
                            for y in y0..y1 {
                                let gy = (y as isize - oy) as usize;
                                for xx in x0..x1 {
                                    let gx = (xx as isize - ox) as usize;
                                    dst[y * w + xx] = dst[y * w + xx] + wv * g[gy * w + gx];
                                }
                            }
                        }
                    }
                }
            });
    }

    Ok(ConvGrads {
        d_input: Tensor::from_parts(s, d_input),
        d_weights: Tensor::from_parts(spec.geometry().weight_shape(), d_weights),
        d_bias,
    })
}

/// Adjoint of [`crate::channel_softmax`] given its output:
/// `d_in = out * (d_out - <out, d_out>)` per location.
pub fn softmax_backward<T: Element>(output: &Tensor<T>, d_output: &Tensor<T>) -> Result<Tensor<T>> {
    let s = output.shape();
    d_output.expect_shape("softmax_backward d_output", s)?;
    let plane = s.plane();
    let mut d_in = vec![T::zero(); s.numel()];
    if plane == 0 || s.c == 0 {
        return Ok(Tensor::from_parts(s, d_in));
    }
    let (y, g) = (output.data(), d_output.data());
    d_in.par_chunks_mut(s.c * plane)
        .enumerate()
        .for_each(|(n, dst)| {
            let base = n * s.c * plane;
            for p in 0..plane {
                let mut dot = T::zero();
                for c in 0..s.c {
                    let i = base + c * plane + p;
                    dot = dot + y[i] * g[i];
                }
                for c in 0..s.c {
                    let i = base + c * plane + p;
                    dst[c * plane + p] = y[i] * (g[i] - dot);
                }
            }
        });
    Ok(Tensor::from_parts(s, d_in))
}

/// Adjoint of [`crate::reassemble`]: returns `(d_input, d_kernels)`.
pub fn reassemble_backward<T: Element>(
    input: &Tensor<T>,
    kernels: &KernelField<T>,
    d_output: &Tensor<T>,
    config: &UpsampleConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = input.shape();
    let ks = kernels.kernels.shape();
    let out_shape = check_reassemble_shapes(s, ks, config)?;
    d_output.expect_shape("reassemble_backward d_output", out_shape)?;
    let (sigma, k, r) = (config.sigma, config.k_up, config.radius() as isize);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let out_plane = oh * ow;
    let kd = kernels.kernels.data();
    let gd = d_output.data();

    let mut d_kernels = vec![T::zero(); ks.numel()];
    if out_plane > 0 {
        d_kernels
            .par_chunks_mut(out_plane)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, t) = (idx / (k * k), idx % (k * k));
                let (u, v) = ((t / k) as isize - r, (t % k) as isize - r);
                for i in 0..oh {
                    let y = (i / sigma) as isize + u;
                    if y < 0 || y >= s.h as isize {
                        continue;
                    }
                    for j in 0..ow {
                        let x = (j / sigma) as isize + v;
                        if x < 0 || x >= s.w as isize {
                            continue;
                        }
                        let p = i * ow + j;
                        let mut acc = T::zero();
                        for c in 0..s.c {
                            acc = acc
                                + gd[(n * s.c + c) * out_plane + p]
                                    * input.plane(n, c)[y as usize * s.w + x as usize];
                        }
                        dst[p] = acc;
                    }
                }
            });
    }

    let mut d_input = vec![T::zero(); s.numel()];
    let in_plane = s.plane();
    if in_plane > 0 {
        d_input
            .par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, c) = (idx / s.c, idx % s.c);
                let g = &gd[(n * s.c + c) * out_plane..(n * s.c + c + 1) * out_plane];
                let kb = n * k * k * out_plane;
                for y in 0..s.h {
                    for x in 0..s.w {
                        let mut acc = T::zero();
                        for u in 0..k {
                            // outputs whose base row is y - (u - r)
                            let by = y as isize - (u as isize - r);
                            if by < 0 || by >= s.h as isize {
                                continue;
                            }
                            for v in 0..k {
                                let bx = x as isize - (v as isize - r);
                                if bx < 0 || bx >= s.w as isize {
                                    continue;
                                }
                                let t = u * k + v;
                                for i in by as usize * sigma..(by as usize + 1) * sigma {
                                    for j in bx as usize * sigma..(bx as usize + 1) * sigma {
                                        let p = i * ow + j;
                                        acc = acc + g[p] * kd[kb + t * out_plane + p];
                                    }
                                }
                            }
                        }
                        dst[y * s.w + x] = acc;
                    }
                }
            });
    }

    Ok((
        Tensor::from_parts(s, d_input),
        Tensor::from_parts(ks, d_kernels),
    ))
}

/// Adjoint of [`crate::expand_kernel_space`]: returns `(d_source, d_offsets)`.
///
/// At integer sampling coordinates the offset derivative is taken from the
/// cell on the positive side; on a clamped axis it is zero.
pub fn expand_backward<T: Element>(
    source: &KernelField<T>,
    offsets: &OffsetField<T>,
    d_expanded: &Tensor<T>,
    config: &UpsampleConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = source.kernels.shape();
    let o = offsets.offsets.shape();
    check_expand_shapes(s, o, config)?;
    d_expanded.expect_shape("expand_backward d_expanded", Shape::new(s.n, s.c, o.h, o.w))?;
    let out_plane = o.h * o.w;
    let in_plane = s.plane();
    let gd = d_expanded.data();

    let mut d_source = vec![T::zero(); s.numel()];
    let mut d_offsets = vec![T::zero(); o.numel()];
    for n in 0..s.n {
        let cells = sampling_cells(&offsets.offsets, n, s.h, s.w, config.sigma);
        let ds = &mut d_source[n * s.c * in_plane..(n + 1) * s.c * in_plane];
        ds.par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(t, dst)| {
                let g = &gd[(n * s.c + t) * out_plane..(n * s.c + t + 1) * out_plane];
                for (p, cell) in cells.iter().enumerate() {
                    for (idx, wgt) in cell.corners(s.w) {
                        dst[idx] = dst[idx] + wgt * g[p];
                    }
                }
            });
        let (dox, doy) =
            d_offsets[n * 2 * out_plane..(n + 1) * 2 * out_plane].split_at_mut(out_plane);
        dox.par_iter_mut()
            .zip(doy.par_iter_mut())
            .enumerate()
            .for_each(|(p, (gx_out, gy_out))| {
                let cell = &cells[p];
                let (mut gx, mut gy) = (T::zero(), T::zero());
                for t in 0..s.c {
                    let g = gd[(n * s.c + t) * out_plane + p];
                    let (fx, fy) = cell.gradient(source.kernels.plane(n, t), s.w);
                    gx = gx + g * fx;
                    gy = gy + g * fy;
                }
                *gx_out = gx;
                *gy_out = gy;
            });
    }
    Ok((
        Tensor::from_parts(s, d_source),
        Tensor::from_parts(o, d_offsets),
    ))
}
