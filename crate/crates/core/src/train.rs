//! Seeded synthetic upsampling task and a momentum-SGD trainer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conv::ConvSpec;
use crate::error::{config_err, shape_err, Error, Result};
use crate::grad::LayerGrad;
use crate::registry::{Registry, Upsampler};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};
use crate::upsample::{bilinear_upsample, nearest_upsample, DluParams, UpsampleConfig};

/// How the regression target relates to the smooth high-resolution field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    /// Bilinear upsampling of the box-downsampled field.
    BilinearOfHighres,
    /// The high-resolution field itself. Nearest upsampling is already the
    /// best block-constant predictor here.
    KnownHighres,
}

/// Smooth random fields in `[0, 1]`; the input is their `sigma x sigma` box
/// average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTask {
    pub seed: u64,
    /// Low-resolution input size.
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub sigma: usize,
    pub target_rule: TargetRule,
    /// Cosine components per channel.
    pub components: usize,
    /// Highest spatial frequency, in cycles across the image.
    pub max_frequency: f64,
    pub eval_samples: usize,
}

impl Default for SynthTask {
    fn default() -> Self {
        SynthTask {
            seed: 1,
            h: 16,
            w: 16,
            channels: 4,
            sigma: 2,
            target_rule: TargetRule::BilinearOfHighres,
            components: 4,
            max_frequency: 3.0,
            eval_samples: 4,
        }
    }
}

/// One `(input, target)` batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: Tensor,
    pub target: Tensor,
}

const EVAL_STREAM: u64 = u64::MAX;

impl SynthTask {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.channels == 0 || self.sigma == 0 {
            return config_err("task sizes and sigma must be positive");
        }
        if self.components == 0 || self.eval_samples == 0 {
            return config_err("task needs at least one component and one eval sample");
        }
        if self.max_frequency.is_nan() || self.max_frequency <= 0.0 {
            return config_err("max_frequency must be positive");
        }
        Ok(())
    }

    /// `sigma h x sigma w` cosine mixture per channel, bounded in `[0, 1]`.
    pub fn highres_field(&self, rng: &mut Rng, n: usize) -> Tensor {
        let (hh, ww) = (self.h * self.sigma, self.w * self.sigma);
        let amp = 0.5 / self.components as f64;
        let waves: Vec<Vec<[f64; 4]>> = (0..n * self.channels)
            .map(|_| {
                (0..self.components)
                    .map(|_| {
                        [
                            amp * rng.uniform(0.2, 1.0),
                            rng.uniform(-self.max_frequency, self.max_frequency),
                            rng.uniform(-self.max_frequency, self.max_frequency),
                            rng.uniform(0.0, 2.0 * PI),
                        ]
                    })
                    .collect()
            })
            .collect();
        Tensor::from_fn((n, self.channels, hh, ww), |b, c, y, x| {
            let (u, v) = (x as f64 / ww as f64, y as f64 / hh as f64);
            waves[b * self.channels + c]
                .iter()
                .fold(0.5, |acc, &[a, fx, fy, phase]| {
                    acc + a * (2.0 * PI * (fx * u + fy * v) + phase).cos()
                })
        })
    }

    /// Deterministic batch for a given stream index.
    pub fn batch(&self, stream: u64, n: usize) -> Result<Batch> {
        self.validate()?;
        let mut rng = Rng::new(self.seed).fork(stream);
        let high = self.highres_field(&mut rng, n);
        let input = box_downsample(&high, self.sigma)?;
        let target = match self.target_rule {
            TargetRule::KnownHighres => high,
            TargetRule::BilinearOfHighres => bilinear_upsample(&input, self.sigma)?,
        };
        Ok(Batch { input, target })
    }

    /// Training batch for `step`.
    pub fn train_batch(&self, step: usize, n: usize) -> Result<Batch> {
        self.batch(step as u64, n)
    }

    /// Held-out batch, disjoint from every training stream.
    pub fn eval_batch(&self) -> Result<Batch> {
        self.batch(EVAL_STREAM, self.eval_samples)
    }

    /// Model used by the learnability run: `k_up = 3`, `k_encoder = 3`, `C_m = 8`.
    pub fn default_model(&self) -> UpsampleConfig {
        self.upsample_config(3, 3, 8)
    }

    /// Model config for this task with the given reassembly/encoder sizes.
    pub fn upsample_config(&self, k_up: usize, k_encoder: usize, c_mid: usize) -> UpsampleConfig {
        UpsampleConfig {
            sigma: self.sigma,
            k_up,
            k_encoder,
            c_mid,
            c_in: self.channels,
        }
    }
}

/// Mean over each `sigma x sigma` block.
pub fn box_downsample(input: &Tensor, sigma: usize) -> Result<Tensor> {
    let s = input.shape();
    if sigma == 0 || s.h % sigma != 0 || s.w % sigma != 0 {
        return shape_err(format!("box_downsample: {s} is not divisible by {sigma}"));
    }
    let inv = 1.0 / (sigma * sigma) as f64;
    Ok(Tensor::from_fn(
        Shape::new(s.n, s.c, s.h / sigma, s.w / sigma),
        |n, c, y, x| {
            let mut acc = 0.0;
            for dy in 0..sigma {
                for dx in 0..sigma {
                    acc += input.at(n, c, y * sigma + dy, x * sigma + dx);
                }
            }
            acc * inv
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            steps: 500,
            batch_size: 4,
            eval_interval: 25,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Settings of the learnability run. The loss is a per-element mean of
    /// order 1e-3, so the step size is far above the generic default.
    pub fn tuned() -> Self {
        TrainConfig {
            lr: 5.0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return config_err("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum)
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return config_err("momentum must lie in [0, 1) and weight decay be >= 0");
        }
        if self.steps == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return config_err("steps, batch size and eval interval must be >= 1");
        }
        Ok(())
    }
}

/// Initialisation used for training: generator `N(0, 0.001^2)`, offsets
/// zero, compressor Xavier.
pub fn init_dlu_params(config: &UpsampleConfig, rng: &mut Rng) -> Result<DluParams> {
    DluParams::init(config, rng)
}

/// Mean squared error and its gradient `2 (pred - target) / count`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let diff = pred.zip_map(target, |p, t| p - t)?;
    let count = diff.len().max(1) as f64;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff.scale(2.0 / count)))
}

/// Momentum buffers, one flat vector per layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Velocity {
    buffers: Vec<Vec<f64>>,
}

impl Velocity {
    pub fn buffers(&self) -> &[Vec<f64>] {
        &self.buffers
    }
}

/// `v <- m v - lr (g + wd theta)`, `theta <- theta + v`, layer by layer.
pub fn sgd_step(
    layers: &mut [(&'static str, &mut ConvSpec)],
    grads: &[LayerGrad],
    config: &TrainConfig,
    velocity: &mut Velocity,
) -> Result<()> {
    if layers.len() != grads.len() {
        return shape_err(format!(
            "sgd_step: {} layers but {} gradients",
            layers.len(),
            grads.len()
        ));
    }
    if velocity.buffers.is_empty() {
        velocity.buffers = layers
            .iter()
            .map(|(_, l)| vec![0.0; l.allocated_count()])
            .collect();
    }
    for (((name, layer), grad), v) in layers.iter_mut().zip(grads).zip(&mut velocity.buffers) {
        if *name != grad.name {
            return shape_err(format!(
                "sgd_step: layer `{name}` paired with gradient `{}`",
                grad.name
            ));
        }
        let mut theta = layer.to_flat();
        let g = grad.to_flat();
        if g.len() != theta.len() || v.len() != theta.len() {
            return shape_err(format!("sgd_step: size mismatch in layer `{name}`"));
        }
        for ((t, gi), vi) in theta.iter_mut().zip(&g).zip(v.iter_mut()) {
            *vi = config.momentum * *vi - config.lr * (gi + config.weight_decay * *t);
            *t += *vi;
        }
        layer.load_flat(&theta)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub train_loss: f64,
    /// Present on evaluation steps only.
    pub eval_loss: Option<f64>,
}

pub struct TrainOutcome {
    pub curve: Vec<LossRecord>,
    pub model: Box<dyn Upsampler<f64>>,
    pub initial_eval: f64,
    pub final_eval: f64,
}

impl TrainOutcome {
    pub fn eval_reduction(&self) -> f64 {
        1.0 - self.final_eval / self.initial_eval
    }
}

pub fn eval_loss(model: &dyn Upsampler<f64>, batch: &Batch) -> Result<f64> {
    Ok(mse_loss(&model.forward(&batch.input)?, &batch.target)?.0)
}

/// Eval MSE of nearest-neighbour upsampling on the held-out batch.
pub fn nearest_baseline(task: &SynthTask) -> Result<f64> {
    let eval = task.eval_batch()?;
    Ok(mse_loss(&nearest_upsample(&eval.input, task.sigma)?, &eval.target)?.0)
}

/// Trains `method` from its registered initialisation. Evaluation happens
/// before the first step, every `eval_interval` steps, and after the last.
pub fn train(
    task: &SynthTask,
    method: &str,
    model_config: &UpsampleConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    task.validate()?;
    config.validate()?;
    if model_config.c_in != task.channels || model_config.sigma != task.sigma {
        return config_err("model config must match the task's channels and sigma");
    }
    let mut model =
        Registry::<f64>::builtin().create(method, model_config, &mut Rng::new(config.seed))?;
    let eval = task.eval_batch()?;
    let initial_eval = eval_loss(model.as_ref(), &eval)?;
    let mut curve = Vec::with_capacity(config.steps);
    let mut velocity = Velocity::default();
    let mut final_eval = initial_eval;
    for step in 1..=config.steps {
        let batch = task.train_batch(step, config.batch_size)?;
        let pred = model.forward(&batch.input)?;
        let (loss, d_pred) = mse_loss(&pred, &batch.target)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        let (_, grads) = model.forward_backward(&batch.input, &d_pred)?;
        if !grads.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: f64::NAN,
            });
        }
        sgd_step(
            &mut model.layers_mut(),
            &grads.d_params,
            config,
            &mut velocity,
        )?;
        let eval_now = step % config.eval_interval == 0 || step == config.steps;
        let eval_value = if eval_now {
            let e = eval_loss(model.as_ref(), &eval)?;
            if !e.is_finite() {
                return Err(Error::Diverged { step, loss: e });
            }
            final_eval = e;
            Some(e)
        } else {
            None
        };
        curve.push(LossRecord {
            step,
            train_loss: loss,
            eval_loss: eval_value,
        });
    }
    Ok(TrainOutcome {
        curve,
        model,
        initial_eval,
        final_eval,
    })
}

/// CSV loss curve with a versioned header comment.
pub fn curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from("# dlu-loss-curve v1\nstep,train_loss,eval_loss\n");
    for r in curve {
        let eval = r.eval_loss.map(|e| format!("{e:e}")).unwrap_or_default();
        out.push_str(&format!("{},{:e},{}\n", r.step, r.train_loss, eval));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvGeometry;
    use crate::rng::random_uniform;

    #[test]
    fn task_shapes_and_bounds() {
        let t = SynthTask::default();
        let b = t.train_batch(3, 2).unwrap();
        assert_eq!(b.input.shape(), Shape::new(2, 4, 16, 16));
        assert_eq!(b.target.shape(), Shape::new(2, 4, 32, 32));
        assert!(b.target.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(t.train_batch(3, 2).unwrap(), b);
        assert_ne!(t.train_batch(4, 2).unwrap(), b);
    }

    #[test]
    fn box_downsample_averages_blocks() {
        let x = Tensor::from_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(box_downsample(&x, 2).unwrap().data(), &[3.0]);
        assert!(box_downsample(&x, 3).is_err());
    }

    #[test]
    fn mse_basics() {
        let a: Tensor = random_uniform(&mut Rng::new(1), (1, 2, 3, 3), 0.0, 1.0);
        let (l, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let (l, _) = mse_loss(&a.map(|v| v + 0.5), &a).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    fn one_layer(v: f64) -> ConvSpec {
        let g = ConvGeometry::new(1, 1, 1).unwrap();
        ConvSpec::from_parts(g, Tensor::full(g.weight_shape(), v), vec![v]).unwrap()
    }

    fn grad_of(v: f64) -> LayerGrad {
        LayerGrad {
            name: "l",
            d_weights: Tensor::full((1, 1, 1, 1), v),
            d_bias: vec![v],
        }
    }

    #[test]
    fn sgd_recurrence() {
        let cfg = TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut layer = one_layer(1.0);
        let mut vel = Velocity::default();
        sgd_step(&mut [("l", &mut layer)], &[grad_of(2.0)], &cfg, &mut vel).unwrap();
        assert_eq!(layer.bias[0], 1.0 - 0.1 * 2.0);
        sgd_step(&mut [("l", &mut layer)], &[grad_of(1.0)], &cfg, &mut vel).unwrap();
        let v2 = 0.9 * (-0.2) - 0.1 * 1.0;
        assert_eq!(layer.bias[0], 0.8 + v2);
        let mut frozen = one_layer(3.0);
        let mut vel = Velocity::default();
        sgd_step(
            &mut [("l", &mut frozen)],
            &[grad_of(0.0)],
            &TrainConfig {
                weight_decay: 0.0,
                ..cfg
            },
            &mut vel,
        )
        .unwrap();
        assert_eq!(frozen, one_layer(3.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr: f64::NAN,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthTask {
            sigma: 0,
            ..SynthTask::default()
        }
        .validate()
        .is_err());
    }
}
