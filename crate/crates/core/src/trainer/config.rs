use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_CHUNK_SIZE;
use crate::curriculum::UpdateRule;
use crate::error::{Error, Result};
use crate::graph::{PropagationConfig, Readout, DEFAULT_TOP_M};
use crate::retrieval::LAMBDA_EVQA;
use crate::rl::{SimParams, DEFAULT_ROLLOUTS};

/// Which curriculum components run.
///
/// | mode            | data curriculum | curriculum sampling | propagation |
/// |-----------------|-----------------|---------------------|-------------|
/// | `vanilla`       |                 |                     |             |
/// | `data_only`     | yes             |                     |             |
/// | `sampling_only` |                 | raw observed means  |             |
/// | `wiki_r1`       | yes             | propagated estimates| yes         |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "wiki_r1")]
    Full,
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "data_only")]
    DataOnly,
    #[serde(rename = "sampling_only")]
    SamplingOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::Vanilla, Mode::DataOnly, Mode::SamplingOnly];

    pub fn data_curriculum(self) -> bool {
        matches!(self, Mode::Full | Mode::DataOnly)
    }

    pub fn sampling_curriculum(self) -> bool {
        matches!(self, Mode::Full | Mode::SamplingOnly)
    }

    pub fn propagation(self) -> bool {
        matches!(self, Mode::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "wiki_r1",
            Mode::Vanilla => "vanilla",
            Mode::DataOnly => "data_only",
            Mode::SamplingOnly => "sampling_only",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid("mode", format!("unknown mode {name:?}")))
    }
}

/// Which rewards feed the propagation each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationSource {
    /// The current batch's samples, each at its running mean reward.
    #[default]
    Batch,
    /// Running mean reward of every sample observed so far.
    History,
}

/// What one sliding-window entry is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowGranularity {
    /// Mean reward of the whole batch.
    #[default]
    Batch,
    /// Every individual rollout reward.
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub batch_size: usize,
    pub n_rollouts: usize,
    pub w: usize,
    pub tau: f64,
    #[serde(rename = "G")]
    pub max_gap: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub alpha: f64,
    #[serde(rename = "prop_T")]
    pub prop_t: usize,
    pub prop_eps: f64,
    pub top_m: usize,
    pub seed: u64,
    pub eta: f64,
    pub eta_topic: f64,
    pub noise_coeff: f64,
    pub miss_coeff: f64,
    pub initial_gap: usize,
    /// Only check for an upgrade once the window is at capacity.
    pub require_full_window: bool,
    pub window_granularity: WindowGranularity,
    pub difficulty_update: UpdateRule,
    pub propagation_interval: usize,
    pub observations: ObservationSource,
    pub readout: Readout,
    /// Evaluate every this many iterations (and after the last); 0 disables.
    pub eval_every: usize,
    /// Fraction of samples held out from training for evaluation.
    pub eval_fraction: f64,
    /// Dump the difficulty store every this many iterations; 0 disables.
    pub snapshot_every: usize,
    pub chunk_size: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        let sim = SimParams::default();
        Self {
            mode: Mode::Full,
            iterations: 300,
            batch_size: 16,
            n_rollouts: DEFAULT_ROLLOUTS,
            w: 300,
            tau: 0.55,
            max_gap: 6,
            sigma: 0.2,
            lambda: LAMBDA_EVQA,
            alpha: 0.8,
            prop_t: 10,
            prop_eps: 1e-4,
            top_m: DEFAULT_TOP_M,
            seed: 0,
            eta: sim.eta,
            eta_topic: sim.eta_topic,
            noise_coeff: sim.noise_coeff,
            miss_coeff: sim.miss_coeff,
            initial_gap: 1,
            require_full_window: true,
            window_granularity: WindowGranularity::Batch,
            difficulty_update: UpdateRule::Accumulate,
            propagation_interval: 1,
            observations: ObservationSource::Batch,
            readout: Readout::Raw,
            eval_every: 25,
            eval_fraction: 0.2,
            snapshot_every: 100,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl TrainerConfig {
    pub fn from_json(input: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(input).map_err(|e| Error::parse("trainer config", e.line(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            eta: self.eta,
            eta_topic: self.eta_topic,
            noise_coeff: self.noise_coeff,
            miss_coeff: self.miss_coeff,
        }
    }

    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            alpha: self.alpha,
            max_iters: self.prop_t,
            epsilon: self.prop_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("w", self.w),
            ("top_m", self.top_m),
            ("propagation_interval", self.propagation_interval),
            ("chunk_size", self.chunk_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if self.n_rollouts < 2 {
            return Err(Error::invalid("n_rollouts", "must be at least 2"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("tau", "must lie in (0, 1)"));
        }
        if self.max_gap < 2 {
            return Err(Error::invalid("G", "must be at least 2"));
        }
        if self.initial_gap > self.max_gap {
            return Err(Error::invalid("initial_gap", "must not exceed G"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::invalid("eval_fraction", "must lie in [0, 1)"));
        }
        self.propagation().validate()?;
        self.sim_params().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = TrainerConfig::default();
        assert_eq!((c.w, c.tau, c.max_gap, c.n_rollouts), (300, 0.55, 6, 4));
        assert_eq!((c.alpha, c.prop_t, c.prop_eps, c.top_m), (0.8, 10, 1e-4, 100));
        assert_eq!(c.sigma, 0.2);
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = TrainerConfig {
            mode: Mode::SamplingOnly,
            tau: 0.6,
            ..TrainerConfig::default()
        };
        assert_eq!(TrainerConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = TrainerConfig::from_json(r#"{"mode":"vanilla","G":4,"prop_T":3}"#).unwrap();
        assert_eq!(partial.mode, Mode::Vanilla);
        assert_eq!((partial.max_gap, partial.prop_t), (4, 3));
        assert!(TrainerConfig::from_json(r#"{"unknown":1}"#).is_err());
        assert!(TrainerConfig::from_json(r#"{"tau":1.5}"#).is_err());
    }

    #[test]
    fn mode_matrix() {
        let rows: Vec<(bool, bool, bool)> = Mode::ALL
            .iter()
            .map(|m| (m.data_curriculum(), m.sampling_curriculum(), m.propagation()))
            .collect();
        assert_eq!(
            rows,
            vec![(true, true, true), (false, false, false), (true, false, false), (false, true, false)]
        );
        assert_eq!(Mode::parse("wiki_r1").unwrap(), Mode::Full);
        assert!(Mode::parse("nope").is_err());
    }
}
