//! JSON run configuration. Every field has a default; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dlu_core::complexity::Scope;
use dlu_core::train::{SynthTask, TrainConfig};
use dlu_core::UpsampleConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Cartesian grid of upsampler hyper-parameters and input sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub sigma: Vec<usize>,
    pub k_up: Vec<usize>,
    pub k_encoder: Vec<usize>,
    pub c_mid: Vec<usize>,
    pub c_in: Vec<usize>,
    /// `[h, w]` input sizes; used by `bench` only.
    pub input_size: Vec<[usize; 2]>,
}

impl Default for Grid {
    fn default() -> Self {
        let d = UpsampleConfig::default();
        Grid {
            sigma: vec![d.sigma],
            k_up: vec![d.k_up],
            k_encoder: vec![d.k_encoder],
            c_mid: vec![d.c_mid],
            c_in: vec![d.c_in],
            input_size: vec![[16, 16]],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> anyhow::Result<()> {
        let axes = [
            ("sigma", &self.sigma),
            ("k_up", &self.k_up),
            ("k_encoder", &self.k_encoder),
            ("c_mid", &self.c_mid),
            ("c_in", &self.c_in),
        ];
        for (name, axis) in axes {
            if axis.is_empty() {
                bail!("grid axis `{name}` is empty");
            }
        }
        if self.input_size.is_empty() {
            bail!("grid axis `input_size` is empty");
        }
        for c in self.configs() {
            c.validate()?;
        }
        Ok(())
    }

    /// Every grid point, `sigma` outermost.
    pub fn configs(&self) -> Vec<UpsampleConfig> {
        let mut out = Vec::new();
        for &sigma in &self.sigma {
            for &k_up in &self.k_up {
                for &k_encoder in &self.k_encoder {
                    for &c_mid in &self.c_mid {
                        for &c_in in &self.c_in {
                            out.push(UpsampleConfig {
                                sigma,
                                k_up,
                                k_encoder,
                                c_mid,
                                c_in,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Smallest value on every axis.
    pub fn smallest(&self) -> UpsampleConfig {
        let min = |v: &Vec<usize>| v.iter().copied().min().unwrap_or(1);
        UpsampleConfig {
            sigma: min(&self.sigma),
            k_up: min(&self.k_up),
            k_encoder: min(&self.k_encoder),
            c_mid: min(&self.c_mid),
            c_in: min(&self.c_in),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub probes: usize,
    pub epsilon: f64,
    /// Normalisation samples per property config.
    pub samples: usize,
    /// Flip the sign of one op's analytic gradient (failure-path test hook).
    pub fault: Option<String>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            probes: 200,
            epsilon: 1e-5,
            samples: 1000,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub method: String,
    pub task: SynthTask,
    pub model: UpsampleConfig,
    pub optimizer: TrainConfig,
    /// Directory receiving the trained layers as tensor containers.
    pub params_out: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let task = SynthTask::default();
        TrainSection {
            method: "dlu".into(),
            model: task.default_model(),
            task,
            optimizer: TrainConfig::tuned(),
            params_out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub methods: Vec<String>,
    pub grid: Grid,
    pub scopes: Vec<Scope>,
    pub repetitions: usize,
    pub warmup: usize,
    pub precision: Precision,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub check: CheckSection,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            methods: vec!["carafe".into(), "dlu".into()],
            grid: Grid::default(),
            scopes: vec![Scope::FullOp],
            repetitions: 5,
            warmup: 1,
            precision: Precision::F32,
            seed: 0,
            format: Format::Csv,
            out: None,
            threads: None,
            check: CheckSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.methods.is_empty() {
            bail!("method list is empty");
        }
        if self.repetitions == 0 {
            bail!("repetitions must be >= 1");
        }
        if self.scopes.is_empty() {
            bail!("scope list is empty");
        }
        if self.threads == Some(0) {
            bail!("thread cap must be >= 1");
        }
        self.grid.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert_eq!(serde_json::from_str::<RunConfig>("{}").unwrap(), c);
    }

    #[test]
    fn partial_grid_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"grid": {"sigma": [2, 4]}}"#).unwrap();
        assert_eq!(c.grid.configs().len(), 2);
        assert_eq!(c.grid.c_in, vec![256]);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sigmas": [2]}"#).is_err());
    }

    #[test]
    fn smallest_takes_axis_minimum() {
        let g = Grid {
            sigma: vec![4, 2],
            c_mid: vec![64, 32],
            ..Grid::default()
        };
        assert_eq!(g.smallest().sigma, 2);
        assert_eq!(g.smallest().c_mid, 32);
    }
}
