//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use dlu_core::complexity::{CostRegistry, CostReport, CSV_COLUMNS};
use dlu_core::grad::CheckOptions;
use dlu_core::registry::Registry;
use dlu_core::train::{curve_csv, nearest_baseline, train, LossRecord};
use dlu_core::verify::{
    check_interior_constant, check_normalization_preservation, check_zero_offset_identity,
    gradient_suite, PropertyReport, SuiteEntry, SuiteOptions,
};
use dlu_core::{io, random_uniform, Element, Rng, Tensor, UpsampleConfig};
use serde::Serialize;

use crate::config::{Format, Precision, RunConfig};
use crate::report::{emit, render, Row};

/// Whether every check in a run met its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    #[serde(flatten)]
    pub report: CostReport,
    pub params_display: String,
    pub flops_display: String,
}

impl Row for CostRow {
    fn columns() -> &'static [&'static str] {
        const COLUMNS: [&str; 13] = [
            CSV_COLUMNS[0],
            CSV_COLUMNS[1],
            CSV_COLUMNS[2],
            CSV_COLUMNS[3],
            CSV_COLUMNS[4],
            CSV_COLUMNS[5],
            CSV_COLUMNS[6],
            CSV_COLUMNS[7],
            CSV_COLUMNS[8],
            CSV_COLUMNS[9],
            CSV_COLUMNS[10],
            "params_display",
            "flops_display",
        ];
        &COLUMNS
    }

    fn cells(&self) -> Vec<String> {
        let mut cells: Vec<String> = self
            .report
            .csv_row()
            .split(',')
            .map(str::to_string)
            .collect();
        cells.push(self.params_display.clone());
        cells.push(self.flops_display.clone());
        cells
    }
}

pub fn cost_rows(run: &RunConfig) -> anyhow::Result<Vec<CostRow>> {
    let models = CostRegistry::builtin();
    let mut rows = Vec::new();
    for method in &run.methods {
        let model = models.get(method)?;
        for config in run.grid.configs() {
            for &scope in &run.scopes {
                let report = model.cost(&config, scope);
                rows.push(CostRow {
                    params_display: report.params_display(),
                    flops_display: report.flops_display(),
                    report,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_cost(run: &RunConfig) -> anyhow::Result<Outcome> {
    let rows = cost_rows(run)?;
    emit(&render("cost", &rows, run.format)?, run.out.as_deref())?;
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub kind: &'static str,
    pub name: String,
    pub max_abs_err: f64,
    /// Relative error for gradient checks, worst violation for properties.
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

impl From<SuiteEntry> for CheckRow {
    fn from(e: SuiteEntry) -> Self {
        CheckRow {
            kind: "gradient",
            name: e.report.op,
            max_abs_err: e.report.max_abs_err,
            max_rel_err: e.report.max_rel_err,
            tolerance: e.tolerance,
            samples: e.report.num_probes,
            passed: e.passed,
        }
    }
}

impl From<PropertyReport> for CheckRow {
    fn from(p: PropertyReport) -> Self {
        CheckRow {
            kind: "property",
            name: p.property,
            max_abs_err: p.worst,
            max_rel_err: p.worst,
            tolerance: p.tolerance,
            samples: p.samples,
            passed: p.passed,
        }
    }
}

impl Row for CheckRow {
    fn columns() -> &'static [&'static str] {
        &[
            "kind",
            "name",
            "max_abs_err",
            "max_rel_err",
            "tolerance",
            "samples",
            "passed",
        ]
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.kind.to_string(),
            // property names carry commas inside their parameter list
            format!("\"{}\"", self.name),
            format!("{:e}", self.max_abs_err),
            format!("{:e}", self.max_rel_err),
            format!("{:e}", self.tolerance),
            self.samples.to_string(),
            self.passed.to_string(),
        ]
    }
}

pub fn check_rows(run: &RunConfig) -> anyhow::Result<Vec<CheckRow>> {
    let config = run.grid.smallest();
    let opts = SuiteOptions {
        check: CheckOptions {
            epsilon: run.check.epsilon,
            probes: run.check.probes,
            seed: run.seed,
            ..CheckOptions::default()
        },
        fault: run.check.fault.clone(),
    };
    let mut rows: Vec<CheckRow> = gradient_suite(&config, &opts)?
        .into_iter()
        .map(CheckRow::from)
        .collect();
    rows.push(check_normalization_preservation(&config, run.check.samples, run.seed)?.into());
    rows.push(check_zero_offset_identity(&config, run.seed)?.into());
    rows.push(check_interior_constant(&config, run.seed)?.into());
    Ok(rows)
}

pub fn cmd_check(run: &RunConfig) -> anyhow::Result<Outcome> {
    let rows = check_rows(run)?;
    emit(&render("check", &rows, run.format)?, run.out.as_deref())?;
    let failed: Vec<&CheckRow> = rows.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        eprintln!(
            "FAIL {} {}: error {:e} exceeds tolerance {:e}",
            r.kind, r.name, r.max_rel_err, r.tolerance
        );
    }
    Ok(if failed.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub config: UpsampleConfig,
    pub h: usize,
    pub w: usize,
    pub precision: Precision,
    pub threads: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub median_ms: f64,
    /// Median absolute deviation of the timed samples.
    pub mad_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub checksum: String,
    /// Every timed repetition produced the same output bits.
    pub deterministic: bool,
}

impl Row for BenchRow {
    fn columns() -> &'static [&'static str] {
        &[
            "method",
            "sigma",
            "k_up",
            "k_encoder",
            "c_mid",
            "c_in",
            "h",
            "w",
            "precision",
            "threads",
            "repetitions",
            "warmup",
            "median_ms",
            "mad_ms",
            "min_ms",
            "max_ms",
            "checksum",
            "deterministic",
        ]
    }

    fn cells(&self) -> Vec<String> {
        let c = &self.config;
        vec![
            self.method.clone(),
            c.sigma.to_string(),
            c.k_up.to_string(),
            c.k_encoder.to_string(),
            c.c_mid.to_string(),
            c.c_in.to_string(),
            self.h.to_string(),
            self.w.to_string(),
            match self.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            self.threads.to_string(),
            self.repetitions.to_string(),
            self.warmup.to_string(),
            format!("{:.4}", self.median_ms),
            format!("{:.4}", self.mad_ms),
            format!("{:.4}", self.min_ms),
            format!("{:.4}", self.max_ms),
            self.checksum.clone(),
            self.deterministic.to_string(),
        ]
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn bench_one<T: Element>(
    run: &RunConfig,
    method: &str,
    config: &UpsampleConfig,
    h: usize,
    w: usize,
) -> anyhow::Result<BenchRow> {
    let model = Registry::<T>::builtin().create(method, config, &mut Rng::new(run.seed))?;
    let input: Tensor<T> = random_uniform(
        &mut Rng::new(run.seed).fork(1),
        (1, config.c_in, h, w),
        -1.0,
        1.0,
    );
    for _ in 0..run.warmup {
        model.forward(&input)?;
    }
    let mut times = Vec::with_capacity(run.repetitions);
    let mut checksums = Vec::with_capacity(run.repetitions);
    for _ in 0..run.repetitions {
        let start = Instant::now();
        let out = model.forward(&input)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        checksums.push(out.checksum());
    }
    times.sort_by(f64::total_cmp);
    let med = median(&times);
    let mut dev: Vec<f64> = times.iter().map(|t| (t - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(BenchRow {
        method: method.to_string(),
        config: *config,
        h,
        w,
        precision: run.precision,
        threads: rayon::current_num_threads(),
        repetitions: run.repetitions,
        warmup: run.warmup,
        median_ms: med,
        mad_ms: median(&dev),
        min_ms: times[0],
        max_ms: times[times.len() - 1],
        checksum: format!("{:016x}", checksums[0]),
        deterministic: checksums.iter().all(|&c| c == checksums[0]),
    })
}

pub fn bench_rows(run: &RunConfig) -> anyhow::Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for method in &run.methods {
        for config in run.grid.configs() {
            for &[h, w] in &run.grid.input_size {
                rows.push(match run.precision {
                    Precision::F32 => bench_one::<f32>(run, method, &config, h, w)?,
                    Precision::F64 => bench_one::<f64>(run, method, &config, h, w)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_bench(run: &RunConfig) -> anyhow::Result<Outcome> {
    let rows = bench_rows(run)?;
    emit(&render("bench", &rows, run.format)?, run.out.as_deref())?;
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone, Serialize)]
struct TrainSummary<'a> {
    method: &'a str,
    initial_eval: f64,
    final_eval: f64,
    nearest_eval: f64,
    curve: &'a [LossRecord],
}

fn write_params(dir: &Path, layers: &[(&'static str, &dlu_core::ConvSpec)]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, layer) in layers {
        io::write_tensor(
            &dir.join(format!("{name}.weight.dlut")),
            &layer.weights,
            serde_json::json!({ "layer": name, "part": "weight" }),
        )?;
        let bias = Tensor::from_vec((1, layer.bias.len(), 1, 1), layer.bias.clone())?;
        io::write_tensor(
            &dir.join(format!("{name}.bias.dlut")),
            &bias,
            serde_json::json!({ "layer": name, "part": "bias" }),
        )?;
    }
    Ok(())
}

pub fn cmd_train(run: &RunConfig) -> anyhow::Result<Outcome> {
    let t = &run.train;
    let optimizer = dlu_core::train::TrainConfig {
        seed: run.seed,
        ..t.optimizer
    };
    let outcome = train(&t.task, &t.method, &t.model, &optimizer)?;
    let nearest = nearest_baseline(&t.task)?;
    let text = match run.format {
        Format::Csv => curve_csv(&outcome.curve),
        Format::Json => {
            serde_json::to_string_pretty(&TrainSummary {
                method: &t.method,
                initial_eval: outcome.initial_eval,
                final_eval: outcome.final_eval,
                nearest_eval: nearest,
                curve: &outcome.curve,
            })? + "\n"
        }
    };
    emit(&text, run.out.as_deref())?;
    if let Some(dir) = &t.params_out {
        write_params(dir, &outcome.model.layers())?;
    }
    eprintln!(
        "{}: eval MSE {:.6e} -> {:.6e} ({:.1}% lower); nearest baseline {:.6e}",
        t.method,
        outcome.initial_eval,
        outcome.final_eval,
        100.0 * outcome.eval_reduction(),
        nearest
    );
    Ok(Outcome::Pass)
}
