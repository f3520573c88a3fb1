//! Upsamplers as trait objects, constructed by name.

use std::collections::BTreeMap;

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::grad::{carafe_forward_backward, dlu_forward_backward, GradBundle};
use crate::meter::FlopMeter;
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};
use crate::upsample::{
    bilinear_upsample_metered, carafe_forward_metered, dlu_forward_metered, nearest_upsample,
    CarafeParams, DluParams, UpsampleConfig,
};

/// A feature upsampler with optional learnable convolution layers.
pub trait Upsampler<T: Element>: Send + Sync {
    fn method(&self) -> &'static str;

    fn config(&self) -> &UpsampleConfig;

    fn forward_metered(&self, input: &Tensor<T>, meter: Option<&FlopMeter>) -> Result<Tensor<T>>;

    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_metered(input, None)
    }

    /// Learnable layers in a fixed order; empty for fixed operators.
    fn layers(&self) -> Vec<(&'static str, &ConvSpec<T>)> {
        Vec::new()
    }

    fn layers_mut(&mut self) -> Vec<(&'static str, &mut ConvSpec<T>)> {
        Vec::new()
    }

    /// `(output, gradients)` for the upstream gradient `d_output`.
    fn forward_backward(
        &self,
        _input: &Tensor<T>,
        _d_output: &Tensor<T>,
    ) -> Result<(Tensor<T>, GradBundle<T>)> {
        Err(Error::Unsupported {
            method: self.method().to_string(),
            what: "backward",
        })
    }

    fn param_count(&self) -> u64 {
        self.layers()
            .iter()
            .map(|(_, l)| l.allocated_count() as u64)
            .sum()
    }
}

pub struct Nearest {
    config: UpsampleConfig,
}

pub struct Bilinear {
    config: UpsampleConfig,
}

pub struct Carafe<T: Element> {
    config: UpsampleConfig,
    pub params: CarafeParams<T>,
}

pub struct Dlu<T: Element> {
    config: UpsampleConfig,
    pub params: DluParams<T>,
}

impl<T: Element> Upsampler<T> for Nearest {
    fn method(&self) -> &'static str {
        "nearest"
    }
    fn config(&self) -> &UpsampleConfig {
        &self.config
    }
    fn forward_metered(&self, input: &Tensor<T>, _: Option<&FlopMeter>) -> Result<Tensor<T>> {
        nearest_upsample(input, self.config.sigma)
    }
}

impl<T: Element> Upsampler<T> for Bilinear {
    fn method(&self) -> &'static str {
        "bilinear"
    }
    fn config(&self) -> &UpsampleConfig {
        &self.config
    }
    fn forward_metered(&self, input: &Tensor<T>, meter: Option<&FlopMeter>) -> Result<Tensor<T>> {
        bilinear_upsample_metered(input, self.config.sigma, meter)
    }
}

impl<T: Element> Carafe<T> {
    pub fn new(config: UpsampleConfig, params: CarafeParams<T>) -> Self {
        Carafe { config, params }
    }
}

impl<T: Element> Upsampler<T> for Carafe<T> {
    fn method(&self) -> &'static str {
        "carafe"
    }
    fn config(&self) -> &UpsampleConfig {
        &self.config
    }
    fn forward_metered(&self, input: &Tensor<T>, meter: Option<&FlopMeter>) -> Result<Tensor<T>> {
        carafe_forward_metered(input, &self.params, &self.config, meter)
    }
    fn layers(&self) -> Vec<(&'static str, &ConvSpec<T>)> {
        self.params.layers().to_vec()
    }
    fn layers_mut(&mut self) -> Vec<(&'static str, &mut ConvSpec<T>)> {
        self.params.layers_mut().into_iter().collect()
    }
    fn forward_backward(
        &self,
        input: &Tensor<T>,
        d_output: &Tensor<T>,
    ) -> Result<(Tensor<T>, GradBundle<T>)> {
        carafe_forward_backward(input, &self.params, &self.config, d_output)
    }
}

impl<T: Element> Dlu<T> {
    pub fn new(config: UpsampleConfig, params: DluParams<T>) -> Self {
        Dlu { config, params }
    }
}

impl<T: Element> Upsampler<T> for Dlu<T> {
    fn method(&self) -> &'static str {
        "dlu"
    }
    fn config(&self) -> &UpsampleConfig {
        &self.config
    }
    fn forward_metered(&self, input: &Tensor<T>, meter: Option<&FlopMeter>) -> Result<Tensor<T>> {
        dlu_forward_metered(input, &self.params, &self.config, meter)
    }
    fn layers(&self) -> Vec<(&'static str, &ConvSpec<T>)> {
        self.params.layers().to_vec()
    }
    fn layers_mut(&mut self) -> Vec<(&'static str, &mut ConvSpec<T>)> {
        self.params.layers_mut().into_iter().collect()
    }
    fn forward_backward(
        &self,
        input: &Tensor<T>,
        d_output: &Tensor<T>,
    ) -> Result<(Tensor<T>, GradBundle<T>)> {
        dlu_forward_backward(input, &self.params, &self.config, d_output)
    }
}

/// Builds an initialised upsampler for a validated config.
pub type Factory<T> =
    Box<dyn Fn(&UpsampleConfig, &mut Rng) -> Result<Box<dyn Upsampler<T>>> + Send + Sync>;

/// Upsampler factories keyed by method name.
pub struct Registry<T: Element> {
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: Element> Registry<T> {
    pub fn empty() -> Self {
        Registry {
            factories: BTreeMap::new(),
        }
    }

    /// `nearest`, `bilinear`, `carafe`, `dlu`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(
            "nearest",
            Box::new(|c, _| Ok(Box::new(Nearest { config: *c }))),
        );
        r.register(
            "bilinear",
            Box::new(|c, _| Ok(Box::new(Bilinear { config: *c }))),
        );
        r.register(
            "carafe",
            Box::new(|c, rng| Ok(Box::new(Carafe::new(*c, CarafeParams::init(c, rng)?)))),
        );
        r.register(
            "dlu",
            Box::new(|c, rng| Ok(Box::new(Dlu::new(*c, DluParams::init(c, rng)?)))),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, factory: Factory<T>) {
        self.factories.insert(name.into(), factory);
    }

    pub fn create(
        &self,
        name: &str,
        config: &UpsampleConfig,
        rng: &mut Rng,
    ) -> Result<Box<dyn Upsampler<T>>> {
        config.validate()?;
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))?;
        factory(config, rng)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

impl<T: Element> Default for Registry<T> {
    fn default() -> Self {
        Self::builtin()
    }
}
