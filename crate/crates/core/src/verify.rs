//! Self-check suites: finite-difference gradient checks for every backward
//! pass, and the normalisation/identity properties of the kernel expander.

use serde::{Deserialize, Serialize};

use crate::conv::{conv2d, ConvGeometry, ConvSpec};
use crate::error::Result;
use crate::grad::{
    carafe_backward, conv2d_backward, dlu_backward, expand_backward, finite_diff_check_terms,
    reassemble_backward, softmax_backward, CheckOptions, CheckReport,
};
use crate::rng::{random_gaussian, random_uniform, Rng};
use crate::shuffle::{pixel_shuffle, pixel_unshuffle};
use crate::softmax::channel_softmax;
use crate::tensor::{Shape, Tensor};
use crate::upsample::{
    carafe_forward, dlu_forward, dlu_generate_kernels, expand_kernel_space, nearest_upsample,
    reassemble, CarafeParams, DluParams, KernelField, OffsetField, UpsampleConfig,
};

/// Relative-error tolerance for single-operator adjoints.
pub const SINGLE_OP_TOL: f64 = 1e-6;
/// Relative-error tolerance for end-to-end pipelines.
pub const END_TO_END_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub report: CheckReport,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteEntry {
    fn new(report: CheckReport, tolerance: f64) -> Self {
        let passed = report.num_probes > 0
            && report.max_rel_err <= tolerance
            && report.max_rel_err.is_finite();
        SuiteEntry {
            report,
            tolerance,
            passed,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub check: CheckOptions,
    /// Name of an op whose analytic gradient gets its sign flipped; exercises
    /// the failure path of the suite.
    pub fault: Option<String>,
}

impl SuiteOptions {
    fn analytic(&self, op: &str, mut grad: Vec<f64>) -> Vec<f64> {
        if self.fault.as_deref() == Some(op) {
            grad.iter_mut().for_each(|g| *g = -*g);
        }
        grad
    }
}

fn flat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn tensor_at(theta: &[f64], offset: &mut usize, shape: Shape) -> Tensor {
    let t = Tensor::from_vec(shape, theta[*offset..*offset + shape.numel()].to_vec())
        .expect("slice length");
    *offset += shape.numel();
    t
}

fn weighted_terms(out: &Tensor, weights: &Tensor) -> Vec<f64> {
    out.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .collect()
}

fn smooth(_: &[f64]) -> Vec<i64> {
    Vec::new()
}

pub fn check_conv2d(opts: &SuiteOptions) -> Result<SuiteEntry> {
    let mut rng = Rng::new(opts.check.seed ^ 0x11);
    let g = ConvGeometry::new(3, 4, 3)?;
    let input: Tensor = random_gaussian(&mut rng, (2, 3, 5, 6), 0.0, 1.0)?;
    let mut spec = ConvSpec::<f64>::gaussian(g, &mut rng, 0.5)?;
    spec.bias = random_uniform::<f64>(&mut rng, (1, 1, 1, 4), -1.0, 1.0).into_vec();
    let r: Tensor = random_gaussian(&mut rng, (2, 4, 5, 6), 0.0, 1.0)?;
    let grads = conv2d_backward(&input, &spec, &r)?;
    let theta = flat(&[input.data(), &spec.to_flat()]);
    let analytic = opts.analytic(
        "conv2d",
        flat(&[grads.d_input.data(), grads.d_weights.data(), &grads.d_bias]),
    );
    let f = |t: &[f64]| {
        let mut at = 0;
        let x = tensor_at(t, &mut at, input.shape());
        let mut s = spec.clone();
        s.load_flat(&t[at..]).expect("layout");
        weighted_terms(&conv2d(&x, &s).expect("shapes"), &r)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("conv2d", f, smooth, &theta, &analytic, &opts.check),
        SINGLE_OP_TOL,
    ))
}

pub fn check_softmax(opts: &SuiteOptions) -> Result<SuiteEntry> {
    let mut rng = Rng::new(opts.check.seed ^ 0x22);
    let logits: Tensor = random_gaussian(&mut rng, (2, 5, 3, 4), 0.0, 1.0)?;
    let r: Tensor = random_gaussian(&mut rng, logits.shape(), 0.0, 1.0)?;
    let d = softmax_backward(&channel_softmax(&logits), &r)?;
    let analytic = opts.analytic("softmax", d.into_vec());
    let f = |t: &[f64]| {
        let z = Tensor::from_vec(logits.shape(), t.to_vec()).expect("shape");
        weighted_terms(&channel_softmax(&z), &r)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("softmax", f, smooth, logits.data(), &analytic, &opts.check),
        SINGLE_OP_TOL,
    ))
}

pub fn check_pixel_shuffle(opts: &SuiteOptions) -> Result<SuiteEntry> {
    let mut rng = Rng::new(opts.check.seed ^ 0x33);
    let input: Tensor = random_gaussian(&mut rng, (1, 8, 2, 3), 0.0, 1.0)?;
    let r: Tensor = random_gaussian(&mut rng, (1, 2, 4, 6), 0.0, 1.0)?;
    let analytic = opts.analytic("pixel_shuffle", pixel_unshuffle(&r, 2)?.into_vec());
    let f = |t: &[f64]| {
        let x = Tensor::from_vec(input.shape(), t.to_vec()).expect("shape");
        weighted_terms(&pixel_shuffle(&x, 2).expect("shape"), &r)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms(
            "pixel_shuffle",
            f,
            smooth,
            input.data(),
            &analytic,
            &opts.check,
        ),
        SINGLE_OP_TOL,
    ))
}

pub fn check_reassemble(opts: &SuiteOptions) -> Result<SuiteEntry> {
    let mut rng = Rng::new(opts.check.seed ^ 0x44);
    let config = UpsampleConfig {
        sigma: 2,
        k_up: 3,
        ..UpsampleConfig::default()
    };
    let input: Tensor = random_gaussian(&mut rng, (2, 3, 3, 4), 0.0, 1.0)?;
    let kernels: Tensor = random_gaussian(&mut rng, (2, 9, 6, 8), 0.0, 1.0)?;
    let r: Tensor = random_gaussian(&mut rng, (2, 3, 6, 8), 0.0, 1.0)?;
    let (d_in, d_k) = reassemble_backward(
        &input,
        &KernelField::new(kernels.clone(), false),
        &r,
        &config,
    )?;
    let theta = flat(&[input.data(), kernels.data()]);
    let analytic = opts.analytic("reassemble", flat(&[d_in.data(), d_k.data()]));
    let f = |t: &[f64]| {
        let mut at = 0;
        let x = tensor_at(t, &mut at, input.shape());
        let k = tensor_at(t, &mut at, kernels.shape());
        weighted_terms(
            &reassemble(&x, &KernelField::new(k, false), &config).expect("shapes"),
            &r,
        )
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("reassemble", f, smooth, &theta, &analytic, &opts.check),
        SINGLE_OP_TOL,
    ))
}

/// Random offsets whose sampling points sit at least `margin` away from any
/// integer coordinate; roughly one in eight lands far outside the grid.
fn off_kink_offsets(
    rng: &mut Rng,
    n: usize,
    h: usize,
    w: usize,
    sigma: usize,
    margin: f64,
) -> Tensor {
    Tensor::from_fn((n, 2, h * sigma, w * sigma), |_, d, i, j| {
        let (base, len) = if d == 0 {
            (j / sigma, w)
        } else {
            (i / sigma, h)
        };
        if rng.below(8) == 0 {
            let far = rng.uniform(1.0 + margin, 3.0 - margin) + (len - 1) as f64;
            return if rng.below(2) == 0 {
                far - base as f64
            } else {
                -far - base as f64
            };
        }
        let cellpos = rng.below(len.max(2) - 1) as f64;
        cellpos + rng.uniform(margin, 1.0 - margin) - base as f64
    })
}

fn sampling_signature(offsets: &Tensor, sigma: usize) -> Vec<i64> {
    let s = offsets.shape();
    let mut sig = Vec::with_capacity(s.numel());
    for n in 0..s.n {
        for d in 0..2 {
            for i in 0..s.h {
                for j in 0..s.w {
                    let base = if d == 0 { j / sigma } else { i / sigma };
                    sig.push((base as f64 + offsets.at(n, d, i, j)).floor() as i64);
                }
            }
        }
    }
    sig
}

pub fn check_expand(opts: &SuiteOptions) -> Result<SuiteEntry> {
    let mut rng = Rng::new(opts.check.seed ^ 0x55);
    let config = UpsampleConfig {
        sigma: 2,
        k_up: 3,
        ..UpsampleConfig::default()
    };
    let (h, w) = (4, 5);
    let logits: Tensor = random_gaussian(&mut rng, (1, 9, h, w), 0.0, 1.0)?;
    let source = channel_softmax(&logits);
    let offsets = off_kink_offsets(&mut rng, 1, h, w, 2, 1e-3);
    let r: Tensor = random_gaussian(&mut rng, (1, 9, h * 2, w * 2), 0.0, 1.0)?;
    let (d_src, d_off) = expand_backward(
        &KernelField::new(source.clone(), true),
        &OffsetField::new(offsets.clone())?,
        &r,
        &config,
    )?;
    let theta = flat(&[source.data(), offsets.data()]);
    let analytic = opts.analytic("expand", flat(&[d_src.data(), d_off.data()]));
    let split = source.len();
    let f = |t: &[f64]| {
        let mut at = 0;
        let s = tensor_at(t, &mut at, source.shape());
        let o = tensor_at(t, &mut at, offsets.shape());
        let e = expand_kernel_space(
            &KernelField::new(s, true),
            &OffsetField::new(o).expect("2ch"),
            &config,
        )
        .expect("shapes");
        weighted_terms(&e.kernels, &r)
    };
    let cell = |t: &[f64]| {
        let o = Tensor::from_vec(offsets.shape(), t[split..].to_vec()).expect("shape");
        sampling_signature(&o, 2)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("expand", f, cell, &theta, &analytic, &opts.check),
        SINGLE_OP_TOL,
    ))
}

/// Small config for the end-to-end checks, keeping the caller's geometry but
/// capping channel counts.
fn e2e_config(config: &UpsampleConfig) -> UpsampleConfig {
    UpsampleConfig {
        c_in: config.c_in.min(4),
        c_mid: config.c_mid.min(6),
        ..*config
    }
}

/// DLU parameters with non-zero offsets, so sampling points are off the grid.
pub fn random_dlu_params(config: &UpsampleConfig, rng: &mut Rng) -> Result<DluParams> {
    let mut p = DluParams::<f64>::init(config, rng)?;
    p.space_generator = ConvSpec::gaussian(p.space_generator.geometry(), rng, 0.5)?;
    p.offset_predictor = ConvSpec::gaussian(p.offset_predictor.geometry(), rng, 0.4)?;
    p.offset_predictor.bias =
        random_uniform::<f64>(rng, (1, 1, 1, p.offset_predictor.out_channels()), -0.7, 0.7)
            .into_vec();
    p.space_generator.bias =
        random_uniform::<f64>(rng, (1, 1, 1, p.space_generator.out_channels()), -0.5, 0.5)
            .into_vec();
    Ok(p)
}

pub fn random_carafe_params(config: &UpsampleConfig, rng: &mut Rng) -> Result<CarafeParams> {
    let mut p = CarafeParams::<f64>::init(config, rng)?;
    p.kernel_generator = ConvSpec::gaussian(p.kernel_generator.geometry(), rng, 0.5)?;
    p.kernel_generator.bias =
        random_uniform::<f64>(rng, (1, 1, 1, p.kernel_generator.out_channels()), -0.5, 0.5)
            .into_vec();
    Ok(p)
}

fn load_dlu(template: &DluParams, t: &[f64]) -> DluParams {
    let mut p = template.clone();
    let mut at = 0;
    for (_, layer) in p.layers_mut() {
        let len = layer.allocated_count();
        layer.load_flat(&t[at..at + len]).expect("layout");
        at += len;
    }
    p
}

fn load_carafe(template: &CarafeParams, t: &[f64]) -> CarafeParams {
    let mut p = template.clone();
    let mut at = 0;
    for (_, layer) in p.layers_mut() {
        let len = layer.allocated_count();
        layer.load_flat(&t[at..at + len]).expect("layout");
        at += len;
    }
    p
}

pub fn check_dlu(config: &UpsampleConfig, opts: &SuiteOptions) -> Result<SuiteEntry> {
    let config = e2e_config(config);
    let mut rng = Rng::new(opts.check.seed ^ 0x66);
    let params = random_dlu_params(&config, &mut rng)?;
    let input: Tensor = random_gaussian(&mut rng, (1, config.c_in, 4, 4), 0.0, 1.0)?;
    let r: Tensor = random_gaussian(
        &mut rng,
        (1, config.c_in, 4 * config.sigma, 4 * config.sigma),
        0.0,
        1.0,
    )?;
    let g = dlu_backward(&input, &params, &config, &r)?;
    let theta_params: Vec<f64> = params
        .layers()
        .iter()
        .flat_map(|(_, l)| l.to_flat())
        .collect();
    let theta = flat(&[&theta_params, input.data()]);
    let analytic = opts.analytic("dlu", flat(&[&g.params_flat(), g.d_input.data()]));
    let np = theta_params.len();
    let f = |t: &[f64]| {
        let p = load_dlu(&params, &t[..np]);
        let x = Tensor::from_vec(input.shape(), t[np..].to_vec()).expect("shape");
        weighted_terms(&dlu_forward(&x, &p, &config).expect("shapes"), &r)
    };
    let cell = |t: &[f64]| {
        let p = load_dlu(&params, &t[..np]);
        let x = Tensor::from_vec(input.shape(), t[np..].to_vec()).expect("shape");
        let k = dlu_generate_kernels(&x, &p, &config).expect("shapes");
        sampling_signature(&k.offsets.offsets, config.sigma)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("dlu", f, cell, &theta, &analytic, &opts.check),
        END_TO_END_TOL,
    ))
}

pub fn check_carafe(config: &UpsampleConfig, opts: &SuiteOptions) -> Result<SuiteEntry> {
    let config = e2e_config(config);
    let mut rng = Rng::new(opts.check.seed ^ 0x77);
    let params = random_carafe_params(&config, &mut rng)?;
    let input: Tensor = random_gaussian(&mut rng, (1, config.c_in, 4, 4), 0.0, 1.0)?;
    let r: Tensor = random_gaussian(
        &mut rng,
        (1, config.c_in, 4 * config.sigma, 4 * config.sigma),
        0.0,
        1.0,
    )?;
    let g = carafe_backward(&input, &params, &config, &r)?;
    let theta_params: Vec<f64> = params
        .layers()
        .iter()
        .flat_map(|(_, l)| l.to_flat())
        .collect();
    let theta = flat(&[&theta_params, input.data()]);
    let analytic = opts.analytic("carafe", flat(&[&g.params_flat(), g.d_input.data()]));
    let np = theta_params.len();
    let f = |t: &[f64]| {
        let p = load_carafe(&params, &t[..np]);
        let x = Tensor::from_vec(input.shape(), t[np..].to_vec()).expect("shape");
        weighted_terms(&carafe_forward(&x, &p, &config).expect("shapes"), &r)
    };
    Ok(SuiteEntry::new(
        finite_diff_check_terms("carafe", f, smooth, &theta, &analytic, &opts.check),
        END_TO_END_TOL,
    ))
}

/// Every gradient check, single ops first.
pub fn gradient_suite(config: &UpsampleConfig, opts: &SuiteOptions) -> Result<Vec<SuiteEntry>> {
    config.validate()?;
    Ok(vec![
        check_conv2d(opts)?,
        check_softmax(opts)?,
        check_pixel_shuffle(opts)?,
        check_reassemble(opts)?,
        check_expand(opts)?,
        check_dlu(config, opts)?,
        check_carafe(config, opts)?,
    ])
}

/// Outcome of a property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub samples: usize,
    /// Worst observed violation measure (0 for exact properties).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Expanded kernels stay normalised for arbitrary offsets, including far
/// out-of-range ones. Reports the worst `|sum - 1|`; entries must also be
/// `>= -1e-9`.
pub fn check_normalization_preservation(
    config: &UpsampleConfig,
    samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let (h, w) = (4, 3);
    let mut worst = 0.0f64;
    let mut min_entry = f64::INFINITY;
    let mut seen = 0;
    while seen < samples {
        let scale = rng.uniform(0.1, 8.0);
        let logits: Tensor = random_gaussian(&mut rng, (1, config.taps(), h, w), 0.0, scale)?;
        let source = KernelField::new(channel_softmax(&logits), true);
        let spread = [0.5, 2.0, 50.0][rng.below(3)];
        let off: Tensor = random_uniform(
            &mut rng,
            (1, 2, h * config.sigma, w * config.sigma),
            -spread,
            spread,
        );
        let expanded = expand_kernel_space(&source, &OffsetField::new(off)?, config)?;
        let (sum_err, min) = expanded.normalization_error();
        worst = worst.max(sum_err);
        min_entry = min_entry.min(min);
        seen += h * w * config.sigma2();
    }
    let passed = worst <= 1e-6 && min_entry >= -1e-9;
    Ok(PropertyReport {
        property: format!(
            "normalization_preservation(sigma={}, k_up={})",
            config.sigma, config.k_up
        ),
        samples: seen,
        worst,
        tolerance: 1e-6,
        passed,
    })
}

/// Zero offsets reproduce nearest-neighbour replication of the source, exactly.
pub fn check_zero_offset_identity(config: &UpsampleConfig, seed: u64) -> Result<PropertyReport> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let logits: Tensor = random_gaussian(&mut rng, (2, config.taps(), 3, 5), 0.0, 2.0)?;
    let source = KernelField::new(channel_softmax(&logits), true);
    let zero = OffsetField::zeros(2, 3 * config.sigma, 5 * config.sigma);
    let expanded = expand_kernel_space(&source, &zero, config)?;
    let replicated = nearest_upsample(&source.kernels, config.sigma)?;
    let worst = expanded.kernels.max_abs_diff(&replicated)?;
    Ok(PropertyReport {
        property: format!(
            "zero_offset_identity(sigma={}, k_up={})",
            config.sigma, config.k_up
        ),
        samples: expanded.kernels.len(),
        worst,
        tolerance: 0.0,
        passed: expanded.kernels == replicated,
    })
}

/// Constant input yields the same constant at every interior output pixel.
pub fn check_interior_constant(config: &UpsampleConfig, seed: u64) -> Result<PropertyReport> {
    let config = e2e_config(config);
    let mut rng = Rng::new(seed);
    let dlu = random_dlu_params(&config, &mut rng)?;
    let carafe = random_carafe_params(&config, &mut rng)?;
    let (h, w) = (config.k_up + 2, config.k_up + 3);
    let value = rng.uniform(-2.0, 2.0);
    let input = Tensor::full((1, config.c_in, h, w), value);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for out in [
        dlu_forward(&input, &dlu, &config)?,
        carafe_forward(&input, &carafe, &config)?,
    ] {
        let r = config.radius();
        for c in 0..config.c_in {
            for i in 0..h * config.sigma {
                for j in 0..w * config.sigma {
                    let (y, x) = (i / config.sigma, j / config.sigma);
                    if y >= r && y + r < h && x >= r && x + r < w {
                        worst = worst.max((out.at(0, c, i, j) - value).abs());
                        samples += 1;
                    }
                }
            }
        }
    }
    Ok(PropertyReport {
        property: format!(
            "interior_constant(sigma={}, k_up={})",
            config.sigma, config.k_up
        ),
        samples,
        worst,
        tolerance: 1e-9,
        passed: worst <= 1e-9,
    })
}

pub fn property_suite(config: &UpsampleConfig, seed: u64) -> Result<Vec<PropertyReport>> {
    Ok(vec![
        check_normalization_preservation(config, 1000, seed)?,
        check_zero_offset_identity(config, seed)?,
        check_interior_constant(config, seed)?,
    ])
}
