use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Hyper-parameters shared by every upsampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct UpsampleConfig {
    /// Integer upsampling ratio.
    pub sigma: usize,
    /// Side of the reassembly kernel (odd).
    pub k_up: usize,
    /// Side of the kernel/offset generator convolutions (odd).
    pub k_encoder: usize,
    /// Channels after the 1x1 compressor.
    pub c_mid: usize,
    /// Input channels.
    pub c_in: usize,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        UpsampleConfig {
            sigma: 2,
            k_up: 5,
            k_encoder: 3,
            c_mid: 64,
            c_in: 256,
        }
    }
}

impl UpsampleConfig {
    pub fn with_sigma(mut self, sigma: usize) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_c_in(mut self, c_in: usize) -> Self {
        self.c_in = c_in;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma == 0 {
            return config_err("sigma must be >= 1");
        }
        if self.k_up == 0 || self.k_up.is_multiple_of(2) {
            return config_err(format!("k_up must be odd, got {}", self.k_up));
        }
        if self.k_encoder == 0 || self.k_encoder.is_multiple_of(2) {
            return config_err(format!("k_encoder must be odd, got {}", self.k_encoder));
        }
        if self.c_mid == 0 || self.c_in == 0 {
            return config_err("channel counts must be positive");
        }
        Ok(())
    }

    pub fn taps(&self) -> usize {
        self.k_up * self.k_up
    }

    pub fn radius(&self) -> usize {
        (self.k_up - 1) / 2
    }

    pub fn sigma2(&self) -> usize {
        self.sigma * self.sigma
    }
}
