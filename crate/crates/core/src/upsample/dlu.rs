//! Dynamic lightweight upsampling.
//!
//! A small source kernel space (one normalised kernel per input pixel) is
//! predicted once; each of the `sigma^2` output pixels belonging to an input
//! pixel then bilinearly samples its kernel from that space at a learned
//! offset from the input pixel's own location.

use rayon::prelude::*;

use crate::conv::{conv2d_metered, ConvGeometry, ConvSpec};
use crate::error::{shape_err, Error, Result};
use crate::meter::{tally_flops, FlopMeter};
use crate::rng::Rng;
use crate::sampling::Cell;
use crate::shuffle::shuffle_offsets;
use crate::softmax::channel_softmax_metered;
use crate::tensor::{Element, Shape, Tensor};

use super::reassemble::reassemble_metered;
use super::{KernelField, OffsetField, UpsampleConfig, GENERATOR_INIT_STD};

#[derive(Debug, Clone, PartialEq)]
pub struct DluParams<T: Element = f64> {
    /// `C -> C_m`, 1x1.
    pub compressor: ConvSpec<T>,
    /// `C_m -> k_up^2`, `k_encoder x k_encoder`.
    pub space_generator: ConvSpec<T>,
    /// `C_m -> 2 * sigma^2`, `k_encoder x k_encoder`.
    pub offset_predictor: ConvSpec<T>,
}

impl<T: Element> DluParams<T> {
    pub fn geometry(config: &UpsampleConfig) -> Result<[ConvGeometry; 3]> {
        config.validate()?;
        Ok([
            ConvGeometry::new(config.c_in, config.c_mid, 1)?,
            ConvGeometry::new(config.c_mid, config.taps(), config.k_encoder)?,
            ConvGeometry::new(config.c_mid, 2 * config.sigma2(), config.k_encoder)?,
        ])
    }

    pub fn zeros(config: &UpsampleConfig) -> Result<Self> {
        let [comp, space, offset] = Self::geometry(config)?;
        Ok(DluParams {
            compressor: ConvSpec::zeros(comp),
            space_generator: ConvSpec::zeros(space),
            offset_predictor: ConvSpec::zeros(offset),
        })
    }

    /// Space generator `N(0, 0.001^2)` with zero bias, offset predictor
    /// all-zero, compressor Xavier.
    pub fn init(config: &UpsampleConfig, rng: &mut Rng) -> Result<Self> {
        let [comp, space, offset] = Self::geometry(config)?;
        Ok(DluParams {
            compressor: ConvSpec::xavier(comp, rng),
            space_generator: ConvSpec::gaussian(space, rng, GENERATOR_INIT_STD)?,
            offset_predictor: ConvSpec::zeros(offset),
        })
    }

    pub fn layers(&self) -> [(&'static str, &ConvSpec<T>); 3] {
        [
            ("compressor", &self.compressor),
            ("space_generator", &self.space_generator),
            ("offset_predictor", &self.offset_predictor),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut ConvSpec<T>); 3] {
        [
            ("compressor", &mut self.compressor),
            ("space_generator", &mut self.space_generator),
            ("offset_predictor", &mut self.offset_predictor),
        ]
    }

    pub fn cast<U: Element>(&self) -> DluParams<U> {
        DluParams {
            compressor: self.compressor.cast(),
            space_generator: self.space_generator.cast(),
            offset_predictor: self.offset_predictor.cast(),
        }
    }

    pub(crate) fn check(&self, input: &Tensor<T>, config: &UpsampleConfig) -> Result<()> {
        let [comp, space, offset] = Self::geometry(config)?;
        if self.compressor.geometry() != comp
            || self.space_generator.geometry() != space
            || self.offset_predictor.geometry() != offset
        {
            return shape_err("DLU parameters do not match the config");
        }
        if input.shape().c != config.c_in {
            return shape_err(format!(
                "DLU: input has {} channels, config expects {}",
                input.shape().c,
                config.c_in
            ));
        }
        Ok(())
    }
}

/// Sampling cell for every output pixel of one batch item.
pub(crate) fn sampling_cells<T: Element>(
    offsets: &Tensor<T>,
    n: usize,
    src_h: usize,
    src_w: usize,
    sigma: usize,
) -> Vec<Cell<T>> {
    let s = offsets.shape();
    let (dx, dy) = (offsets.plane(n, 0), offsets.plane(n, 1));
    (0..s.h * s.w)
        .map(|p| {
            let (i, j) = (p / s.w, p % s.w);
            let x = T::from_f64((j / sigma) as f64) + dx[p];
            let y = T::from_f64((i / sigma) as f64) + dy[p];
            Cell::locate(x, y, src_h, src_w)
        })
        .collect()
}

pub(crate) fn check_expand_shapes(
    source: Shape,
    offsets: Shape,
    config: &UpsampleConfig,
) -> Result<()> {
    let want = Shape::new(
        source.n,
        2,
        source.h * config.sigma,
        source.w * config.sigma,
    );
    if offsets != want {
        return shape_err(format!("offset field: expected {want}, got {offsets}"));
    }
    if source.c != config.taps() {
        return shape_err(format!(
            "source kernels: expected {} channels, got {}",
            config.taps(),
            source.c
        ));
    }
    if source.h == 0 || source.w == 0 {
        return shape_err("source kernel space is empty");
    }
    Ok(())
}

/// Samples `sigma^2` kernels per source location: the kernel at output
/// `(i, j)` is the channel-wise bilinear sample of `source` at
/// `(j / sigma + dx, i / sigma + dy)`. A convex blend of normalised kernels
/// is normalised, so the result keeps the flag without renormalising.
pub fn expand_kernel_space<T: Element>(
    source: &KernelField<T>,
    offsets: &OffsetField<T>,
    config: &UpsampleConfig,
) -> Result<KernelField<T>> {
    expand_metered(source, offsets, config, None)
}

pub(crate) fn expand_metered<T: Element>(
    source: &KernelField<T>,
    offsets: &OffsetField<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<KernelField<T>> {
    if !source.normalized {
        return Err(Error::Contract(
            "expand_kernel_space requires a normalised source kernel space".into(),
        ));
    }
    let s = source.kernels.shape();
    let o = offsets.offsets.shape();
    check_expand_shapes(s, o, config)?;
    let out_shape = Shape::new(s.n, s.c, o.h, o.w);
    let out_plane = o.h * o.w;
    let mut out = vec![T::zero(); out_shape.numel()];
    for n in 0..s.n {
        let cells = sampling_cells(&offsets.offsets, n, s.h, s.w, config.sigma);
        let dst = &mut out[n * s.c * out_plane..(n + 1) * s.c * out_plane];
        dst.par_chunks_mut(out_plane)
            .enumerate()
            .for_each(|(t, plane_out)| {
                let plane_in = source.kernels.plane(n, t);
                for (d, cell) in plane_out.iter_mut().zip(&cells) {
                    *d = cell.sample(plane_in, s.w);
                }
                tally_flops(meter, 9 * out_plane);
            });
    }
    Ok(KernelField::new(Tensor::from_parts(out_shape, out), true))
}

/// Everything the kernel-generation branch produces.
#[derive(Debug, Clone)]
pub struct DluKernels<T: Element = f64> {
    /// `(n, k_up^2, sigma*h, sigma*w)`
    pub expanded: KernelField<T>,
    pub offsets: OffsetField<T>,
    /// `(n, k_up^2, h, w)`
    pub source: KernelField<T>,
}

pub fn dlu_generate_kernels<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
) -> Result<DluKernels<T>> {
    dlu_generate_metered(input, params, config, None)
}

pub(crate) fn dlu_generate_metered<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<DluKernels<T>> {
    params.check(input, config)?;
    let compressed = conv2d_metered(input, &params.compressor, meter)?;
    let logits = conv2d_metered(&compressed, &params.space_generator, meter)?;
    let source = KernelField::new(channel_softmax_metered(&logits, meter), true);
    let raw = conv2d_metered(&compressed, &params.offset_predictor, meter)?;
    let offsets = OffsetField::new(shuffle_offsets(&raw, config.sigma)?)?;
    let expanded = expand_metered(&source, &offsets, config, meter)?;
    Ok(DluKernels {
        expanded,
        offsets,
        source,
    })
}

pub fn dlu_forward<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
) -> Result<Tensor<T>> {
    dlu_forward_metered(input, params, config, None)
}

pub(crate) fn dlu_forward_metered<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<Tensor<T>> {
    let kernels = dlu_generate_metered(input, params, config, meter)?;
    reassemble_metered(input, &kernels.expanded, config, meter)
}
