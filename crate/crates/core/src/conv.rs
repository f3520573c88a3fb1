//! Size-preserving 2-D convolution layers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Result};
use crate::meter::{tally_macs, FlopMeter};
use crate::rng::{random_gaussian, Rng};
use crate::tensor::{Element, Shape, Tensor};

/// Geometry of a convolution layer: `in -> out` channels with a square odd
/// kernel and "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
}

impl ConvGeometry {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Result<Self> {
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return config_err(format!(
                "kernel size must be odd and positive, got {kernel_size}"
            ));
        }
        if in_channels == 0 || out_channels == 0 {
            return config_err("convolution channel counts must be positive");
        }
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            kernel_size,
        })
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels,
            self.kernel_size,
            self.kernel_size,
        )
    }

    /// `(in * k^2 + 1) * out`
    pub fn trainable_count(&self) -> usize {
        (self.in_channels * self.kernel_size * self.kernel_size + 1) * self.out_channels
    }
}

/// Weights `(out, in, k, k)` plus bias of length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec<T: Element = f64> {
    geometry: ConvGeometry,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Element> ConvSpec<T> {
    pub fn zeros(geometry: ConvGeometry) -> Self {
        ConvSpec {
            geometry,
            weights: Tensor::zeros(geometry.weight_shape()),
            bias: vec![T::zero(); geometry.out_channels],
        }
    }

    pub fn from_parts(geometry: ConvGeometry, weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        weights.expect_shape("conv weights", geometry.weight_shape())?;
        if bias.len() != geometry.out_channels {
            return shape_err(format!(
                "conv bias: expected {} entries, got {}",
                geometry.out_channels,
                bias.len()
            ));
        }
        Ok(ConvSpec {
            geometry,
            weights,
            bias,
        })
    }

    /// Uniform fan-average Xavier: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// where `fan_in = in*k^2` and `fan_out = out*k^2`. Bias is zero.
    pub fn xavier(geometry: ConvGeometry, rng: &mut Rng) -> Self {
        let k2 = geometry.kernel_size * geometry.kernel_size;
        let fan_in = geometry.in_channels * k2;
        let fan_out = geometry.out_channels * k2;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = crate::rng::random_uniform(rng, geometry.weight_shape(), -bound, bound);
        ConvSpec {
            geometry,
            weights,
            bias: vec![T::zero(); geometry.out_channels],
        }
    }

    /// Weights from `N(0, std^2)`, bias zero.
    pub fn gaussian(geometry: ConvGeometry, rng: &mut Rng, std: f64) -> Result<Self> {
        Ok(ConvSpec {
            geometry,
            weights: random_gaussian(rng, geometry.weight_shape(), 0.0, std)?,
            bias: vec![T::zero(); geometry.out_channels],
        })
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geometry
    }

    pub fn in_channels(&self) -> usize {
        self.geometry.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.geometry.out_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.geometry.kernel_size
    }

    pub fn trainable_count(&self) -> usize {
        self.geometry.trainable_count()
    }

    /// Number of scalars actually allocated in weights and bias.
    pub fn allocated_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Element>(&self) -> ConvSpec<U> {
        ConvSpec {
            geometry: self.geometry,
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::from_f64(b.to_f64())).collect(),
        }
    }

    /// Weights then bias, flattened.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.weights.data().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.allocated_count() {
            return shape_err(format!(
                "flat parameter vector: expected {}, got {}",
                self.allocated_count(),
                flat.len()
            ));
        }
        let nw = self.weights.len();
        self.weights.data_mut().copy_from_slice(&flat[..nw]);
        self.bias.copy_from_slice(&flat[nw..]);
        Ok(())
    }
}

/// Cross-correlation with zero "same" padding.
pub fn conv2d<T: Element>(input: &Tensor<T>, spec: &ConvSpec<T>) -> Result<Tensor<T>> {
    conv2d_metered(input, spec, None)
}

pub(crate) fn conv2d_metered<T: Element>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    meter: Option<&FlopMeter>,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c != spec.in_channels() {
        return shape_err(format!(
            "conv2d: input has {} channels, layer expects {}",
            s.c,
            spec.in_channels()
        ));
    }
    let out_c = spec.out_channels();
    let k = spec.kernel_size();
    let pad = spec.padding_isize();
    let (h, w) = (s.h, s.w);
    let plane = h * w;
    let out_shape = Shape::new(s.n, out_c, h, w);
    let mut out = vec![T::zero(); out_shape.numel()];
    let wts = spec.weights.data();
    let src = input.data();

    out.par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(idx, dst)| {
            if plane == 0 {
                return;
            }
            let (n, o) = (idx / out_c, idx % out_c);
            dst.fill(spec.bias[o]);
            for ic in 0..s.c {
                let in_plane = &src[(n * s.c + ic) * plane..(n * s.c + ic + 1) * plane];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    let (y0, y1) = valid_range(h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let (x0, x1) = valid_range(w, dx);
                        let wv = wts[((o * s.c + ic) * k + ky) * k + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let row_out = &mut dst[y * w..(y + 1) * w];
                            let row_in = &in_plane[sy * w..(sy + 1) * w];
                            for (x, o) in row_out.iter_mut().enumerate().take(x1).skip(x0) {
                                let sx = (x as isize + dx) as usize;
                                *o = *o + wv * row_in[sx];
                            }
                        }
                    }
                }
            }
            // nominal taps including padded zeros, plus the bias
            tally_macs(meter, plane * (s.c * k * k + 1));
        });
    Ok(Tensor::from_parts(out_shape, out))
}

/// Output indices `y` in `[0, len)` for which `y + offset` is also in range.
#[inline]
pub(crate) fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

impl<T: Element> ConvSpec<T> {
    pub(crate) fn padding_isize(&self) -> isize {
        self.geometry.padding() as isize
    }
}
