//! Binary rewards, group-relative advantages, and a simulated policy.
//!
//! A rollout group with identical rewards carries zero advantage and is
//! ignored by the update. The simulated policy answers correctly with
//! probability
//!
//! ```text
//! p = σ(c + c_topic + logit(1 − d) − a·noise − b·[ground truth missing])
//! ```
//!
//! where `d` is the sample's latent base difficulty and `noise` counts the
//! retrieved candidates that are not the ground truth. Competence grows only
//! through informative groups.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::corpus::VqaSample;
use crate::error::{Error, Result};
use crate::retrieval::RetrievedSet;

pub const DEFAULT_ROLLOUTS: usize = 4;

/// Logit arguments are clamped to this range so probabilities stay inside (0, 1).
const LOGIT_LIMIT: f64 = 30.0;

fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 when the answers agree after lowercasing and whitespace collapsing.
pub fn reward_exact_match(prediction: &str, ground_truth: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(ground_truth) {
        1.0
    } else {
        0.0
    }
}

/// Group-mean-centered rewards scaled by the population standard deviation.
/// Returns `ignored = true` with all-zero advantages for a constant group.
pub fn compute_advantages(rewards: &[f64]) -> Result<(Vec<f64>, bool)> {
    if rewards.len() < 2 {
        return Err(Error::invalid("rewards", "a group needs at least two rollouts"));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok((vec![0.0; rewards.len()], true));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((rewards.iter().map(|r| (r - mean) / std).collect(), false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub sample_index: usize,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub ignored: bool,
}

impl RolloutGroup {
    pub fn from_rewards(sample_index: usize, rewards: Vec<f64>) -> Result<Self> {
        let (advantages, ignored) = compute_advantages(&rewards)?;
        Ok(Self {
            sample_index,
            rewards,
            advantages,
            ignored,
        })
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }

    pub fn mean_abs_advantage(&self) -> f64 {
        self.advantages.iter().map(|a| a.abs()).sum::<f64>() / self.advantages.len() as f64
    }
}

/// The plug-in point for whatever produces answers and learns from groups.
pub trait PolicyAdapter {
    fn answer(
        &self,
        sample_index: usize,
        sample: &VqaSample,
        retrieved: &RetrievedSet,
        rng: &mut dyn RngCore,
    ) -> String;

    /// Applies one update from a batch of `(sample, group)` pairs.
    fn learn(&mut self, batch: &[(&VqaSample, &RolloutGroup)]);
}

/// Samples `n_rollouts` answers and scores them against the ground truth.
pub fn rollout_group<P: PolicyAdapter + ?Sized>(
    policy: &P,
    sample_index: usize,
    sample: &VqaSample,
    retrieved: &RetrievedSet,
    n_rollouts: usize,
    rng: &mut dyn RngCore,
) -> Result<RolloutGroup> {
    let rewards = (0..n_rollouts)
        .map(|_| reward_exact_match(&policy.answer(sample_index, sample, retrieved, rng), &sample.answer))
        .collect();
    RolloutGroup::from_rewards(sample_index, rewards)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Global competence learning rate.
    pub eta: f64,
    pub eta_topic: f64,
    /// Penalty per retrieved candidate that is not the ground truth.
    pub noise_coeff: f64,
    /// Penalty when the ground truth was not retrieved.
    pub miss_coeff: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            eta: 0.05,
            eta_topic: 0.1,
            noise_coeff: 0.15,
            miss_coeff: 2.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v, strict) in [
            ("eta", self.eta, true),
            ("eta_topic", self.eta_topic, false),
            ("noise_coeff", self.noise_coeff, false),
            ("miss_coeff", self.miss_coeff, false),
        ] {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                return Err(Error::invalid(field, format!("{v} is out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub competence: f64,
    pub topic_competence: BTreeMap<String, f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPolicy {
    pub state: PolicyState,
    pub params: SimParams,
    /// Base difficulty per sample, in corpus sample order.
    base_difficulty: Vec<f64>,
}

impl SimPolicy {
    pub fn new(params: SimParams, base_difficulty: Vec<f64>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            state: PolicyState::default(),
            params,
            base_difficulty,
        })
    }

    pub fn base_difficulty(&self, sample_index: usize) -> f64 {
        self.base_difficulty[sample_index]
    }

    pub fn topic_competence(&self, sample: &VqaSample) -> f64 {
        sample
            .topic_id
            .as_ref()
            .and_then(|t| self.state.topic_competence.get(t))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn success_prob(&self, sample: &VqaSample, retrieved: &RetrievedSet, base_difficulty: f64) -> f64 {
        let gt = &sample.gt_article_id;
        let noise = retrieved.entries.iter().filter(|e| &e.article_id != gt).count() as f64;
        let missing = if retrieved.contains(gt) { 0.0 } else { 1.0 };
        logistic(
            self.state.competence + self.topic_competence(sample) + logit(1.0 - base_difficulty)
                - self.params.noise_coeff * noise
                - self.params.miss_coeff * missing,
        )
    }

    /// Answers with an explicit base difficulty: the ground truth on success,
    /// a distinct wrong answer otherwise.
    pub fn answer_with(
        &self,
        sample: &VqaSample,
        retrieved: &RetrievedSet,
        base_difficulty: f64,
        rng: &mut dyn RngCore,
    ) -> String {
        let p = self.success_prob(sample, retrieved, base_difficulty);
        if rng.random::<f64>() < p {
            sample.answer.clone()
        } else {
            format!("not {}", sample.answer)
        }
    }

    /// Rollout group with an explicit base difficulty.
    pub fn rollout(
        &self,
        sample_index: usize,
        sample: &VqaSample,
        retrieved: &RetrievedSet,
        n_rollouts: usize,
        base_difficulty: f64,
        rng: &mut dyn RngCore,
    ) -> Result<RolloutGroup> {
        let rewards = (0..n_rollouts)
            .map(|_| reward_exact_match(&self.answer_with(sample, retrieved, base_difficulty, rng), &sample.answer))
            .collect();
        RolloutGroup::from_rewards(sample_index, rewards)
    }

    /// Informative groups raise global and topic competence in proportion to
    /// their mean absolute advantage, averaged over the whole batch. Ignored
    /// groups contribute nothing.
    pub fn update(&mut self, batch: &[(&VqaSample, &RolloutGroup)]) {
        if batch.is_empty() {
            return;
        }
        let scale = 1.0 / batch.len() as f64;
        for (sample, group) in batch {
            if group.ignored {
                continue;
            }
            let signal = group.mean_abs_advantage() * scale;
            self.state.competence += self.params.eta * signal;
            if let Some(topic) = &sample.topic_id {
                *self.state.topic_competence.entry(topic.clone()).or_insert(0.0) +=
                    self.params.eta_topic * signal;
            }
        }
    }
}

impl PolicyAdapter for SimPolicy {
    fn answer(
        &self,
        sample_index: usize,
        sample: &VqaSample,
        retrieved: &RetrievedSet,
        rng: &mut dyn RngCore,
    ) -> String {
        self.answer_with(sample, retrieved, self.base_difficulty(sample_index), rng)
    }

    fn learn(&mut self, batch: &[(&VqaSample, &RolloutGroup)]) {
        self.update(batch);
    }
}
