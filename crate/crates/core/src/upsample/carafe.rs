//! CARAFE: one predicted kernel per output pixel.

use crate::conv::{conv2d_metered, ConvGeometry, ConvSpec};
use crate::error::{shape_err, Result};
use crate::meter::FlopMeter;
use crate::rng::Rng;
use crate::shuffle::pixel_shuffle;
use crate::softmax::channel_softmax_metered;
use crate::tensor::{Element, Tensor};

use super::reassemble::reassemble_metered;
use super::{KernelField, UpsampleConfig, GENERATOR_INIT_STD};

#[derive(Debug, Clone, PartialEq)]
pub struct CarafeParams<T: Element = f64> {
    /// `C -> C_m`, 1x1.
    pub compressor: ConvSpec<T>,
    /// `C_m -> sigma^2 * k_up^2`, `k_encoder x k_encoder`.
    pub kernel_generator: ConvSpec<T>,
}

impl<T: Element> CarafeParams<T> {
    pub fn geometry(config: &UpsampleConfig) -> Result<[ConvGeometry; 2]> {
        config.validate()?;
        Ok([
            ConvGeometry::new(config.c_in, config.c_mid, 1)?,
            ConvGeometry::new(
                config.c_mid,
                config.sigma2() * config.taps(),
                config.k_encoder,
            )?,
        ])
    }

    pub fn zeros(config: &UpsampleConfig) -> Result<Self> {
        let [comp, gen] = Self::geometry(config)?;
        Ok(CarafeParams {
            compressor: ConvSpec::zeros(comp),
            kernel_generator: ConvSpec::zeros(gen),
        })
    }

    /// Generator weights `N(0, 0.001^2)`, compressor Xavier, biases zero.
    pub fn init(config: &UpsampleConfig, rng: &mut Rng) -> Result<Self> {
        let [comp, gen] = Self::geometry(config)?;
        Ok(CarafeParams {
            compressor: ConvSpec::xavier(comp, rng),
            kernel_generator: ConvSpec::gaussian(gen, rng, GENERATOR_INIT_STD)?,
        })
    }

    pub fn layers(&self) -> [(&'static str, &ConvSpec<T>); 2] {
        [
            ("compressor", &self.compressor),
            ("kernel_generator", &self.kernel_generator),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut ConvSpec<T>); 2] {
        [
            ("compressor", &mut self.compressor),
            ("kernel_generator", &mut self.kernel_generator),
        ]
    }

    pub fn cast<U: Element>(&self) -> CarafeParams<U> {
        CarafeParams {
            compressor: self.compressor.cast(),
            kernel_generator: self.kernel_generator.cast(),
        }
    }

    pub(crate) fn check(&self, input: &Tensor<T>, config: &UpsampleConfig) -> Result<()> {
        let [comp, gen] = Self::geometry(config)?;
        if self.compressor.geometry() != comp || self.kernel_generator.geometry() != gen {
            return shape_err("CARAFE parameters do not match the config");
        }
        if input.shape().c != config.c_in {
            return shape_err(format!(
                "CARAFE: input has {} channels, config expects {}",
                input.shape().c,
                config.c_in
            ));
        }
        Ok(())
    }
}

/// compress -> generate -> pixel shuffle -> softmax, giving normalised
/// `(n, k_up^2, sigma*h, sigma*w)` kernels.
pub fn carafe_generate_kernels<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
) -> Result<KernelField<T>> {
    carafe_generate_metered(input, params, config, None)
}

pub(crate) fn carafe_generate_metered<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<KernelField<T>> {
    params.check(input, config)?;
    let compressed = conv2d_metered(input, &params.compressor, meter)?;
    let logits = conv2d_metered(&compressed, &params.kernel_generator, meter)?;
    let logits = pixel_shuffle(&logits, config.sigma)?;
    Ok(KernelField::new(
        channel_softmax_metered(&logits, meter),
        true,
    ))
}

pub fn carafe_forward<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
) -> Result<Tensor<T>> {
    carafe_forward_metered(input, params, config, None)
}

pub(crate) fn carafe_forward_metered<T: Element>(
    input: &Tensor<T>,
    params: &CarafeParams<T>,
    config: &UpsampleConfig,
    meter: Option<&FlopMeter>,
) -> Result<Tensor<T>> {
    let kernels = carafe_generate_metered(input, params, config, meter)?;
    reassemble_metered(input, &kernels, config, meter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_uniform;
    use crate::tensor::Shape;

    fn small() -> UpsampleConfig {
        UpsampleConfig {
            sigma: 2,
            k_up: 3,
            k_encoder: 3,
            c_mid: 4,
            c_in: 3,
        }
    }

    #[test]
    fn zero_generator_gives_uniform_kernels() {
        let c = small();
        let mut params = CarafeParams::<f64>::init(&c, &mut Rng::new(1)).unwrap();
        params.kernel_generator = ConvSpec::zeros(params.kernel_generator.geometry());
        let input: Tensor = random_uniform(&mut Rng::new(2), (1, 3, 4, 5), -1.0, 1.0);
        let k = carafe_generate_kernels(&input, &params, &c).unwrap();
        assert_eq!(k.kernels.shape(), Shape::new(1, 9, 8, 10));
        assert!(k
            .kernels
            .data()
            .iter()
            .all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn constant_input_interior_preserved() {
        let c = small();
        let mut params = CarafeParams::<f64>::init(&c, &mut Rng::new(3)).unwrap();
        params.kernel_generator =
            ConvSpec::gaussian(params.kernel_generator.geometry(), &mut Rng::new(4), 1.0).unwrap();
        let input = Tensor::full((1, 3, 5, 5), -0.4);
        let out = carafe_forward(&input, &params, &c).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 3, 10, 10));
        for ch in 0..3 {
            for i in 2..8 {
                for j in 2..8 {
                    assert!((out.at(0, ch, i, j) + 0.4).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrong_channels_rejected() {
        let c = small();
        let params = CarafeParams::<f64>::zeros(&c).unwrap();
        let input = Tensor::zeros((1, 4, 3, 3));
        assert!(matches!(
            carafe_forward(&input, &params, &c),
            Err(crate::Error::Shape(_))
        ));
    }
}
