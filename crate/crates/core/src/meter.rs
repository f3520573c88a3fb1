//! Operation counters threaded through the forward kernels.

use std::sync::atomic::{AtomicU64, Ordering};

/// Tallies arithmetic performed by a forward pass. Multiply-adds count as two
/// FLOPs; softmax evaluations are tallied separately as `(count, dim)`.
#[derive(Debug, Default)]
pub struct FlopMeter {
    flops: AtomicU64,
    softmax_count: AtomicU64,
    softmax_dim: AtomicU64,
}

impl FlopMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_macs(&self, macs: u64) {
        self.flops.fetch_add(2 * macs, Ordering::Relaxed);
    }

    pub fn add_flops(&self, flops: u64) {
        self.flops.fetch_add(flops, Ordering::Relaxed);
    }

    pub fn add_softmax(&self, count: u64, dim: u64) {
        self.softmax_count.fetch_add(count, Ordering::Relaxed);
        self.softmax_dim.store(dim, Ordering::Relaxed);
    }

    pub fn flops(&self) -> u64 {
        self.flops.load(Ordering::Relaxed)
    }

    pub fn softmax_count(&self) -> u64 {
        self.softmax_count.load(Ordering::Relaxed)
    }

    pub fn softmax_dim(&self) -> u64 {
        self.softmax_dim.load(Ordering::Relaxed)
    }
}

#[inline]
pub(crate) fn tally_macs(meter: Option<&FlopMeter>, macs: usize) {
    if let Some(m) = meter {
        m.add_macs(macs as u64);
    }
}

#[inline]
pub(crate) fn tally_flops(meter: Option<&FlopMeter>, flops: usize) {
    if let Some(m) = meter {
        m.add_flops(flops as u64);
    }
}
