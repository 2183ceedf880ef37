//! Difficulty bookkeeping, the Gaussian curriculum sampler and the
//! sliding-window gap-level schedule.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Center of the sampling Gaussian: the expected reward with the most
/// informative group-relative signal.
pub const TARGET_REWARD: f64 = 0.5;

/// Slack on the upgrade comparison so a window whose exact mean equals the
/// threshold is not lost to summation rounding.
const UPGRADE_SLACK: f64 = 1e-9;

/// How propagated estimates are folded into the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `H ← clamp(H + ½·H̃, 0, 1)`
    #[default]
    Accumulate,
    /// `H ← ½·(H + H̃)`
    Average,
}

/// Estimated reward `H` per sample, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyStore {
    estimates: Vec<f64>,
    update_count: Vec<u32>,
}

impl DifficultyStore {
    pub fn new(n: usize) -> Self {
        Self {
            estimates: vec![0.0; n],
            update_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn update_counts(&self) -> &[u32] {
        &self.update_count
    }

    /// Folds in propagated estimates; only entries with `H̃ > 0` change.
    pub fn update(&mut self, propagated: &[f64], rule: UpdateRule) -> Result<()> {
        if propagated.len() != self.estimates.len() {
            return Err(Error::DimensionMismatch {
                expected: self.estimates.len(),
                found: propagated.len(),
            });
        }
        if let Some(bad) = propagated.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("propagated estimate", format!("{bad} outside [0, 1]")));
        }
        for ((h, count), &p) in self
            .estimates
            .iter_mut()
            .zip(&mut self.update_count)
            .zip(propagated)
        {
            if p > 0.0 {
                *h = match rule {
                    UpdateRule::Accumulate => (*h + 0.5 * p).clamp(0.0, 1.0),
                    UpdateRule::Average => 0.5 * (*h + p),
                };
                *count += 1;
            }
        }
        Ok(())
    }

    /// Overwrites one estimate with a directly observed value.
    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid("estimate", format!("{value} outside [0, 1]")));
        }
        let h = self
            .estimates
            .get_mut(index)
            .ok_or(Error::DimensionMismatch {
                expected: self.update_count.len(),
                found: index + 1,
            })?;
        *h = value;
        self.update_count[index] += 1;
        Ok(())
    }

    /// CSV with columns `sample_id,H,update_count`.
    pub fn snapshot_csv<'a>(&self, sample_ids: impl IntoIterator<Item = &'a str>) -> String {
        let mut out = String::from("sample_id,H,update_count\n");
        for ((id, h), c) in sample_ids
            .into_iter()
            .zip(&self.estimates)
            .zip(&self.update_count)
        {
            out.push_str(&format!("{id},{h},{c}\n"));
        }
        out
    }
}

/// Per-sample running mean of observed rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardHistory {
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl RewardHistory {
    pub fn new(n: usize) -> Self {
        Self {
            sums: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    pub fn record(&mut self, index: usize, reward: f64) {
        self.sums[index] += reward;
        self.counts[index] += 1;
    }

    pub fn mean(&self, index: usize) -> Option<f64> {
        (self.counts[index] > 0).then(|| self.sums[index] / self.counts[index] as f64)
    }

    pub fn observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.sums.len()).filter_map(|i| self.mean(i).map(|m| (i, m)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sigma: f64,
    pub batch_size: usize,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        Ok(())
    }
}

/// Unnormalized sampling weight `exp(−(h − ½)² / 2σ²)`.
pub fn gaussian_weight(h: f64, sigma: f64) -> f64 {
    (-(h - TARGET_REWARD).powi(2) / (2.0 * sigma * sigma)).exp()
}

fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    u.max(f64::MIN_POSITIVE)
}

/// Draws `batch_size` distinct indices from `pool` with probability
/// proportional to the Gaussian weight of their estimate.
///
/// Uses exponential keys `ln(−ln u) − ln w` (smallest wins), which is
/// successive weighted sampling without replacement and stays exact even
/// when weights underflow.
pub fn sample_batch_from<R: Rng + ?Sized>(
    store: &DifficultyStore,
    cfg: &SamplerConfig,
    pool: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if cfg.batch_size > pool.len() {
        return Err(Error::invalid(
            "batch_size",
            format!("{} exceeds the {} available samples", cfg.batch_size, pool.len()),
        ));
    }
    let two_var = 2.0 * cfg.sigma * cfg.sigma;
    let mut keyed: Vec<(f64, usize)> = pool
        .iter()
        .map(|&i| {
            let h = store.estimates[i];
            let neg_log_w = (h - TARGET_REWARD).powi(2) / two_var;
            ((-unit_open(rng).ln()).ln() + neg_log_w, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().take(cfg.batch_size).map(|(_, i)| i).collect())
}

pub fn sample_batch<R: Rng + ?Sized>(
    store: &DifficultyStore,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..store.len()).collect();
    sample_batch_from(store, cfg, &pool, rng)
}

/// Uniform draw of `batch_size` distinct indices from `pool`.
pub fn sample_uniform_from<R: Rng + ?Sized>(
    pool: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if batch_size == 0 || batch_size > pool.len() {
        return Err(Error::invalid(
            "batch_size",
            format!("{batch_size} not in 1..={}", pool.len()),
        ));
    }
    Ok(rand::seq::index::sample(rng, pool.len(), batch_size)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// FIFO of the most recent reward observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("w", "window capacity must be positive"));
        }
        Ok(Self {
            capacity,
            values: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid("reward", format!("{value} outside [0, 1]")));
        }
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
        Ok(())
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapState {
    pub g: usize,
    pub max_gap: usize,
    pub tau: f64,
}

impl GapState {
    pub fn new(g: usize, max_gap: usize, tau: f64) -> Result<Self> {
        if max_gap < 2 {
            return Err(Error::invalid("G", "must be at least 2"));
        }
        if g > max_gap {
            return Err(Error::invalid("initial_gap", format!("{g} exceeds G = {max_gap}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid("tau", "must lie in (0, 1)"));
        }
        Ok(Self { g, max_gap, tau })
    }

    /// Promotes the gap level and clears the window once the window average
    /// reaches `tau`. With `require_full` the window must also be at capacity.
    pub fn maybe_upgrade(&mut self, window: &mut SlidingWindow, require_full: bool) -> bool {
        if self.g >= self.max_gap || (require_full && !window.is_full()) {
            return false;
        }
        match window.mean() {
            Some(mean) if mean + UPGRADE_SLACK >= self.tau => {
                self.g += 1;
                window.clear();
                true
            }
            _ => false,
        }
    }
}
