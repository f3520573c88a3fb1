//! Closed-form parameter and per-input-pixel FLOP accounting.
//!
//! FLOPs count a multiply-add as two operations and include bias terms as
//! one multiply-add per output value. Softmax cost is kept symbolic as
//! `count x (dim-D sm)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::meter::FlopMeter;
use crate::tensor::{Element, Tensor};
use crate::upsample::{
    bilinear_upsample_metered, carafe_forward_metered, dlu_forward_metered, CarafeParams,
    DluParams, UpsampleConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Kernel prediction only (compressor, generators, normaliser, expander).
    KernelGenOnly,
    /// Kernel prediction plus the reassembly (or the whole fixed operator).
    FullOp,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::KernelGenOnly => "kernel_gen_only",
            Scope::FullOp => "full_op",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel_gen_only" => Ok(Scope::KernelGenOnly),
            "full_op" => Ok(Scope::FullOp),
            other => Err(Error::Config(format!("unknown scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub method: String,
    pub config: UpsampleConfig,
    pub params: u64,
    /// Per input pixel, softmax excluded.
    pub flops_numeric: u64,
    pub softmax_count: u64,
    pub softmax_dim: u64,
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CostReport {
    pub fn params_display(&self) -> String {
        display_count(self.params)
    }

    /// e.g. `199K+4×(25-D sm)`
    pub fn flops_display(&self) -> String {
        let base = display_count(self.flops_numeric);
        if self.softmax_count == 0 {
            base
        } else {
            format!("{base}+{}×({}-D sm)", self.softmax_count, self.softmax_dim)
        }
    }

    /// Numeric FLOPs with softmax priced at `per_element` FLOPs per vector
    /// entry. Not used for any of the reference figures.
    pub fn flops_with_softmax_model(&self, per_element: u64) -> u64 {
        self.flops_numeric + self.softmax_count * self.softmax_dim * per_element
    }
}

/// Compact count: one-decimal rounded `M` at or above a million, truncated
/// integer `K` at or above a thousand, the plain integer below that.
pub fn display_count(v: u64) -> String {
    if v >= 1_000_000 {
        format!("{:.1}M", v as f64 / 1e6)
    } else if v >= 1_000 {
        format!("{}K", v / 1000)
    } else {
        v.to_string()
    }
}

/// One upsampling method's cost formulas.
pub trait CostModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_count(&self, config: &UpsampleConfig) -> u64;

    /// `(numeric flops, softmax count)` of kernel generation per input pixel;
    /// softmax vectors have dimension `k_up^2`.
    fn kernel_gen_flops(&self, config: &UpsampleConfig) -> (u64, u64);

    /// Per-input-pixel cost of applying the kernels (or of the whole
    /// operator for methods without kernel prediction).
    fn apply_flops(&self, config: &UpsampleConfig) -> u64;

    fn note(&self) -> Option<&'static str> {
        None
    }

    fn cost(&self, config: &UpsampleConfig, scope: Scope) -> CostReport {
        let (gen, softmax_count) = self.kernel_gen_flops(config);
        let flops = match scope {
            Scope::KernelGenOnly => gen,
            Scope::FullOp => gen + self.apply_flops(config),
        };
        CostReport {
            method: self.name().to_string(),
            config: *config,
            params: self.param_count(config),
            flops_numeric: flops,
            softmax_count,
            softmax_dim: if softmax_count > 0 {
                config.taps() as u64
            } else {
                0
            },
            scope,
            note: self.note().map(str::to_string),
        }
    }
}

fn u(v: usize) -> u64 {
    v as u64
}

/// `(C_m * k_enc^2 + 1)`: parameters per output channel of a generator conv.
fn generator_unit(c: &UpsampleConfig) -> u64 {
    u(c.c_mid * c.k_encoder * c.k_encoder + 1)
}

fn compressor_params(c: &UpsampleConfig) -> u64 {
    u(c.c_in + 1) * u(c.c_mid)
}

fn reassembly_flops(c: &UpsampleConfig) -> u64 {
    2 * u(c.taps()) * u(c.c_in) * u(c.sigma2())
}

pub struct NearestCost;
pub struct BilinearCost;
pub struct DeconvCost;
pub struct PixelShuffleUpCost;
pub struct CarafeCost;
pub struct DluCost;

impl CostModel for NearestCost {
    fn name(&self) -> &'static str {
        "nearest"
    }
    fn param_count(&self, _: &UpsampleConfig) -> u64 {
        0
    }
    fn kernel_gen_flops(&self, _: &UpsampleConfig) -> (u64, u64) {
        (0, 0)
    }
    fn apply_flops(&self, _: &UpsampleConfig) -> u64 {
        0
    }
}

impl CostModel for BilinearCost {
    fn name(&self) -> &'static str {
        "bilinear"
    }
    fn param_count(&self, _: &UpsampleConfig) -> u64 {
        0
    }
    fn kernel_gen_flops(&self, _: &UpsampleConfig) -> (u64, u64) {
        (0, 0)
    }
    /// Three 3-FLOP lerps per output value: `9 * sigma^2 * C`.
    fn apply_flops(&self, c: &UpsampleConfig) -> u64 {
        9 * u(c.sigma2()) * u(c.c_in)
    }
}

impl CostModel for DeconvCost {
    fn name(&self) -> &'static str {
        "deconv"
    }
    /// `sigma x sigma` transposed conv, stride `sigma`, `C -> C`.
    fn param_count(&self, c: &UpsampleConfig) -> u64 {
        (u(c.c_in) * u(c.sigma2()) + 1) * u(c.c_in)
    }
    fn kernel_gen_flops(&self, _: &UpsampleConfig) -> (u64, u64) {
        (0, 0)
    }
    /// Each input pixel feeds `sigma^2 * C` outputs through `C` MACs plus bias.
    fn apply_flops(&self, c: &UpsampleConfig) -> u64 {
        2 * (u(c.c_in) + 1) * u(c.c_in) * u(c.sigma2())
    }
    fn note(&self) -> Option<&'static str> {
        Some("flops unreconciled: this model gives 2(C+1)C*sigma^2 (526K at C=256, sigma=2); the commonly quoted 1.2M is not reproduced")
    }
}

impl CostModel for PixelShuffleUpCost {
    fn name(&self) -> &'static str {
        "pixel_shuffle_up"
    }
    /// 3x3 conv `C -> C * sigma^2`, then a free reshape.
    fn param_count(&self, c: &UpsampleConfig) -> u64 {
        (u(c.c_in) * 9 + 1) * u(c.c_in) * u(c.sigma2())
    }
    fn kernel_gen_flops(&self, _: &UpsampleConfig) -> (u64, u64) {
        (0, 0)
    }
    fn apply_flops(&self, c: &UpsampleConfig) -> u64 {
        2 * self.param_count(c)
    }
}

impl CostModel for CarafeCost {
    fn name(&self) -> &'static str {
        "carafe"
    }
    /// `(C+1)C_m + (C_m k_enc^2 + 1) sigma^2 k_up^2`
    fn param_count(&self, c: &UpsampleConfig) -> u64 {
        compressor_params(c) + generator_unit(c) * u(c.sigma2()) * u(c.taps())
    }
    fn kernel_gen_flops(&self, c: &UpsampleConfig) -> (u64, u64) {
        (
            2 * compressor_params(c) + 2 * generator_unit(c) * u(c.sigma2()) * u(c.taps()),
            u(c.sigma2()),
        )
    }
    fn apply_flops(&self, c: &UpsampleConfig) -> u64 {
        reassembly_flops(c)
    }
}

impl CostModel for DluCost {
    fn name(&self) -> &'static str {
        "dlu"
    }
    /// `(C+1)C_m + (C_m k_enc^2 + 1) k_up^2 + (C_m k_enc^2 + 1) 2 sigma^2`
    fn param_count(&self, c: &UpsampleConfig) -> u64 {
        compressor_params(c)
            + generator_unit(c) * u(c.taps())
            + generator_unit(c) * 2 * u(c.sigma2())
    }
    /// Adds `9 sigma^2 k_up^2` for the bilinear kernel-space expander.
    fn kernel_gen_flops(&self, c: &UpsampleConfig) -> (u64, u64) {
        let flops = 2 * compressor_params(c)
            + 2 * generator_unit(c) * u(c.taps())
            + 2 * generator_unit(c) * 2 * u(c.sigma2())
            + 9 * u(c.sigma2()) * u(c.taps());
        (flops, 1)
    }
    fn apply_flops(&self, c: &UpsampleConfig) -> u64 {
        reassembly_flops(c)
    }
}

/// Cost models by method name.
pub struct CostRegistry {
    models: BTreeMap<&'static str, Box<dyn CostModel>>,
}

impl CostRegistry {
    pub fn empty() -> Self {
        CostRegistry {
            models: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(NearestCost));
        r.register(Box::new(BilinearCost));
        r.register(Box::new(DeconvCost));
        r.register(Box::new(PixelShuffleUpCost));
        r.register(Box::new(CarafeCost));
        r.register(Box::new(DluCost));
        r
    }

    pub fn register(&mut self, model: Box<dyn CostModel>) {
        self.models.insert(model.name(), model);
    }

    pub fn get(&self, method: &str) -> Result<&dyn CostModel> {
        self.models
            .get(method)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownMethod(method.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }
}

pub fn param_count(method: &str, config: &UpsampleConfig) -> Result<u64> {
    config.validate()?;
    Ok(CostRegistry::builtin().get(method)?.param_count(config))
}

pub fn flop_count(method: &str, config: &UpsampleConfig, scope: Scope) -> Result<CostReport> {
    config.validate()?;
    Ok(CostRegistry::builtin().get(method)?.cost(config, scope))
}

/// A constructed parameter record whose scalars can be enumerated.
pub trait ParamRecord<T: Element> {
    fn conv_layers(&self) -> Vec<&ConvSpec<T>>;
}

impl<T: Element> ParamRecord<T> for CarafeParams<T> {
    fn conv_layers(&self) -> Vec<&ConvSpec<T>> {
        self.layers().into_iter().map(|(_, l)| l).collect()
    }
}

impl<T: Element> ParamRecord<T> for DluParams<T> {
    fn conv_layers(&self) -> Vec<&ConvSpec<T>> {
        self.layers().into_iter().map(|(_, l)| l).collect()
    }
}

/// Counts every allocated weight and bias scalar.
pub fn audit_params<T: Element>(record: &impl ParamRecord<T>) -> u64 {
    record
        .conv_layers()
        .iter()
        .map(|l| (l.weights.data().len() + l.bias.len()) as u64)
        .sum()
}

/// Counts observed while running a forward pass, normalised per input pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredFlops {
    pub flops_per_pixel: u64,
    pub softmax_per_pixel: u64,
    pub softmax_dim: u64,
}

/// Runs the method's forward pass on a `1 x C x h x w` input with an
/// operation counter attached.
pub fn measure_flops(
    method: &str,
    config: &UpsampleConfig,
    h: usize,
    w: usize,
) -> Result<MeasuredFlops> {
    config.validate()?;
    let input = Tensor::<f32>::zeros((1, config.c_in, h, w));
    let meter = FlopMeter::new();
    match method {
        "nearest" => {}
        "bilinear" => {
            bilinear_upsample_metered(&input, config.sigma, Some(&meter))?;
        }
        "carafe" => {
            let params = CarafeParams::<f32>::zeros(config)?;
            carafe_forward_metered(&input, &params, config, Some(&meter))?;
        }
        "dlu" => {
            let params = DluParams::<f32>::zeros(config)?;
            dlu_forward_metered(&input, &params, config, Some(&meter))?;
        }
        other => {
            return Err(Error::Unsupported {
                method: other.to_string(),
                what: "instrumented FLOP measurement",
            })
        }
    }
    let pixels = (h * w) as u64;
    Ok(MeasuredFlops {
        flops_per_pixel: meter.flops() / pixels,
        softmax_per_pixel: meter.softmax_count() / pixels,
        softmax_dim: meter.softmax_dim(),
    })
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} sigma={} params={} ({}) flops={}",
            self.method,
            self.config.sigma,
            self.params,
            self.params_display(),
            self.flops_display()
        )
    }
}

/// Fixed CSV header, versioned.
pub const CSV_VERSION_LINE: &str = "# dlu-cost-report v1";
pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "sigma",
    "k_up",
    "k_encoder",
    "c_mid",
    "c_in",
    "params",
    "flops_numeric",
    "softmax_count",
    "softmax_dim",
    "scope",
];

impl CostReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.config.sigma,
            self.config.k_up,
            self.config.k_encoder,
            self.config.c_mid,
            self.config.c_in,
            self.params,
            self.flops_numeric,
            self.softmax_count,
            self.softmax_dim,
            self.scope.as_str()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(sigma: usize) -> UpsampleConfig {
        UpsampleConfig::default().with_sigma(sigma)
    }

    #[test]
    fn display_rule() {
        assert_eq!(display_count(0), "0");
        assert_eq!(display_count(74_148), "74K");
        assert_eq!(display_count(104_729), "104K");
        assert_eq!(display_count(939_648), "939K");
        assert_eq!(display_count(3_709_248), "3.7M");
        assert_eq!(display_count(2_360_320), "2.4M");
        assert_eq!(display_count(1_048_832), "1.0M");
    }

    #[test]
    fn parameter_counts_at_defaults() {
        assert_eq!(param_count("nearest", &at(2)).unwrap(), 0);
        assert_eq!(param_count("bilinear", &at(2)).unwrap(), 0);
        assert_eq!(param_count("carafe", &at(2)).unwrap(), 74_148);
        assert_eq!(param_count("dlu", &at(2)).unwrap(), 35_489);
        assert_eq!(
            display_count(param_count("deconv", &at(2)).unwrap()),
            "262K"
        );
        assert_eq!(
            display_count(param_count("deconv", &at(4)).unwrap()),
            "1.0M"
        );
        assert_eq!(
            display_count(param_count("pixel_shuffle_up", &at(2)).unwrap()),
            "2.4M"
        );
    }

    #[test]
    fn flop_counts_at_defaults() {
        let carafe = flop_count("carafe", &at(2), Scope::FullOp).unwrap();
        assert_eq!(carafe.flops_numeric, 32_896 + 115_400 + 51_200);
        assert_eq!(carafe.flops_display(), "199K+4×(25-D sm)");
        let dlu = flop_count("dlu", &at(2), Scope::FullOp).unwrap();
        assert_eq!(dlu.flops_numeric, 32_896 + 28_850 + 9_232 + 900 + 51_200);
        assert_eq!(dlu.flops_display(), "123K+1×(25-D sm)");
        assert_eq!(
            flop_count("bilinear", &at(2), Scope::FullOp)
                .unwrap()
                .flops_display(),
            "9K"
        );
        assert_eq!(
            flop_count("nearest", &at(2), Scope::FullOp)
                .unwrap()
                .flops_display(),
            "0"
        );
        assert_eq!(
            flop_count("pixel_shuffle_up", &at(2), Scope::FullOp)
                .unwrap()
                .flops_display(),
            "4.7M"
        );
    }

    #[test]
    fn unknown_method_is_error() {
        assert!(matches!(
            param_count("bicubic", &at(2)),
            Err(Error::UnknownMethod(_))
        ));
        assert!("everything".parse::<Scope>().is_err());
    }

    #[test]
    fn audit_matches_formula_at_defaults() {
        let c = at(2);
        assert_eq!(audit_params(&DluParams::<f32>::zeros(&c).unwrap()), 35_489);
        assert_eq!(
            audit_params(&CarafeParams::<f32>::zeros(&c).unwrap()),
            74_148
        );
        assert_eq!(
            audit_params(&DluParams::<f32>::zeros(&at(8)).unwrap()),
            104_729
        );
    }

    #[test]
    fn softmax_model_is_separate() {
        let r = flop_count("carafe", &at(2), Scope::FullOp).unwrap();
        assert_eq!(r.flops_with_softmax_model(3), r.flops_numeric + 4 * 25 * 3);
    }

    #[test]
    fn csv_row_matches_columns() {
        let r = flop_count("dlu", &at(2), Scope::FullOp).unwrap();
        assert_eq!(r.csv_row().split(',').count(), CSV_COLUMNS.len());
        assert_eq!(r.csv_row(), "dlu,2,5,3,64,256,35489,123078,1,25,full_op");
    }
}
