//! End-to-end backward passes for CARAFE and DLU.

use crate::conv::conv2d;
use crate::error::Result;
use crate::shuffle::{pixel_shuffle, pixel_unshuffle, shuffle_offsets, unshuffle_offsets};
use crate::softmax::channel_softmax;
use crate::tensor::{Element, Tensor};
use crate::upsample::{
    expand_kernel_space, reassemble, CarafeParams, DluParams, KernelField, OffsetField,
    UpsampleConfig,
};

use super::ops::{conv2d_backward, expand_backward, reassemble_backward, softmax_backward};

/// Gradient of one convolution layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T: Element = f64> {
    pub name: &'static str,
    pub d_weights: Tensor<T>,
    pub d_bias: Vec<T>,
}

impl<T: Element> LayerGrad<T> {
    /// Weights then bias, matching [`crate::ConvSpec::to_flat`].
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.d_weights.data().to_vec();
        v.extend_from_slice(&self.d_bias);
        v
    }

    pub fn max_abs(&self) -> T {
        self.d_bias
            .iter()
            .fold(self.d_weights.max_abs(), |m, b| m.max(b.abs()))
    }
}

/// Loss gradients w.r.t. the input, every parameter layer (in the same order
/// as the params record's `layers()`), and the offset field (DLU only).
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle<T: Element = f64> {
    pub d_input: Tensor<T>,
    pub d_params: Vec<LayerGrad<T>>,
    pub d_offsets: Option<Tensor<T>>,
}

impl<T: Element> GradBundle<T> {
    pub fn layer(&self, name: &str) -> Option<&LayerGrad<T>> {
        self.d_params.iter().find(|g| g.name == name)
    }

    /// All parameter gradients flattened in layer order.
    pub fn params_flat(&self) -> Vec<T> {
        self.d_params.iter().flat_map(|g| g.to_flat()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.d_input.is_finite()
            && self
                .d_params
                .iter()
                .all(|g| g.d_weights.is_finite() && g.d_bias.iter().all(|b| b.is_finite()))
            && self.d_offsets.as_ref().is_none_or(|o| o.is_finite())
    }
}

/// Runs the DLU forward and returns `(output, gradients)` for `d_output`.
pub fn dlu_forward_backward<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
    d_output: &Tensor<T>,
) -> Result<(Tensor<T>, GradBundle<T>)> {
    params.check(input, config)?;
    let compressed = conv2d(input, &params.compressor)?;
    let logits = conv2d(&compressed, &params.space_generator)?;
    let source = KernelField::new(channel_softmax(&logits), true);
    let raw = conv2d(&compressed, &params.offset_predictor)?;
    let offsets = OffsetField::new(shuffle_offsets(&raw, config.sigma)?)?;
    let expanded = expand_kernel_space(&source, &offsets, config)?;
    let output = reassemble(input, &expanded, config)?;

    let (d_input_direct, d_expanded) = reassemble_backward(input, &expanded, d_output, config)?;
    let (d_source, d_offsets) = expand_backward(&source, &offsets, &d_expanded, config)?;
    let d_raw = unshuffle_offsets(&d_offsets, config.sigma)?;
    let d_logits = softmax_backward(&source.kernels, &d_source)?;
    let space = conv2d_backward(&compressed, &params.space_generator, &d_logits)?;
    let offset = conv2d_backward(&compressed, &params.offset_predictor, &d_raw)?;
    let d_compressed = space.d_input.add(&offset.d_input)?;
    let comp = conv2d_backward(input, &params.compressor, &d_compressed)?;
    let d_input = d_input_direct.add(&comp.d_input)?;

    Ok((
        output,
        GradBundle {
            d_input,
            d_params: vec![
                LayerGrad {
                    name: "compressor",
                    d_weights: comp.d_weights,
                    d_bias: comp.d_bias,
                },
                LayerGrad {
                    name: "space_generator",
                    d_weights: space.d_weights,
                    d_bias: space.d_bias,
                },
                LayerGrad {
                    name: "offset_predictor",
                    d_weights: offset.d_weights,
                    d_bias: offset.d_bias,
                },
            ],
            d_offsets: Some(d_offsets),
        },
    ))
}

/// Chain of adjoints through reassembly, the kernel-space expander, the
/// normaliser and offset reshape, both generators, and the compressor.
pub fn dlu_backward<T: Element>(
    input: &Tensor<T>,
    params: &DluParams<T>,
    config: &UpsampleConfig,
    d_output: &Tensor<T>,
) -> Result<GradBundle<T>> {
    dlu_forward_backward(input, params, config, d_output).map(|(_, g)| g)
}

pub fn carafe_forward_backward<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
    d_output: &Tensor<T>,
) -> Result<(Tensor<T>, GradBundle<T>)> {
    params.check(input, config)?;
    let compressed = conv2d(input, &params.compressor)?;
    let raw = conv2d(&compressed, &params.kernel_generator)?;
    let kernels = KernelField::new(channel_softmax(&pixel_shuffle(&raw, config.sigma)?), true);
    let output = reassemble(input, &kernels, config)?;

    let (d_input_direct, d_kernels) = reassemble_backward(input, &kernels, d_output, config)?;
    let d_logits = softmax_backward(&kernels.kernels, &d_kernels)?;
    let d_raw = pixel_unshuffle(&d_logits, config.sigma)?;
    let gen = conv2d_backward(&compressed, &params.kernel_generator, &d_raw)?;
    let comp = conv2d_backward(input, &params.compressor, &gen.d_input)?;
    let d_input = d_input_direct.add(&comp.d_input)?;

    Ok((
        output,
        GradBundle {
            d_input,
            d_params: vec![
                LayerGrad {
                    name: "compressor",
                    d_weights: comp.d_weights,
                    d_bias: comp.d_bias,
                },
                LayerGrad {
                    name: "kernel_generator",
                    d_weights: gen.d_weights,
                    d_bias: gen.d_bias,
                },
            ],
            d_offsets: None,
        },
    ))
}

pub fn carafe_backward<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
    d_output: &Tensor<T>,
) -> Result<GradBundle<T>> {
    carafe_forward_backward(input, params, config, d_output).map(|(_, g)| g)
}
