//! TOML experiment configuration.

use cmrl_core::env::RewardMode;
use cmrl_core::marl::{TrainConfig, TrainMode};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path to a TOPO v1 file, relative to the config file's directory.
    pub topology: String,
    pub traffic: TrafficSource,
    /// Chronological train/test split fraction.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSource {
    /// TMSERIES v1 file; mutually exclusive with `gravity`.
    pub file: Option<String>,
    pub gravity: Option<GravityParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityParams {
    pub count: usize,
    pub seed: u64,
    pub total_volume: f64,
    #[serde(default)]
    pub noise_cv: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub gamma: f64,
    pub tau: f64,
    pub minibatch: usize,
    pub capacity: usize,
    pub episodes_per_tm: usize,
    pub steps_per_episode: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub cf_samples: usize,
    pub mode: String,
    pub ddpg_chain: bool,
    pub reward_mode: String,
    pub hidden_width: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_mu: f64,
    pub ou_eta: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            gamma: d.gamma,
            tau: d.tau,
            minibatch: d.minibatch,
            capacity: d.capacity,
            episodes_per_tm: d.episodes_per_tm,
            steps_per_episode: d.steps_per_episode,
            lr_actor: d.lr_actor,
            lr_critic: d.lr_critic,
            cf_samples: d.cf_samples,
            mode: "cmrl".into(),
            ddpg_chain: d.ddpg_chain,
            reward_mode: "improvement".into(),
            hidden_width: d.hidden_width,
            ou_theta: d.ou_theta,
            ou_sigma: d.ou_sigma,
            ou_mu: d.ou_mu,
            ou_eta: d.ou_eta,
            seed: d.seed,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed_override: Option<u64>) -> Result<TrainConfig, String> {
        let mode = match self.mode.as_str() {
            "cmrl" => TrainMode::Cmrl,
            "marl" => TrainMode::Marl,
            "single" => TrainMode::Single,
            other => return Err(format!("unknown train mode `{other}`")),
        };
        let reward_mode = match self.reward_mode.as_str() {
            "improvement" => RewardMode::Improvement,
            "inverted" => RewardMode::Inverted,
            other => return Err(format!("unknown reward mode `{other}`")),
        };
        Ok(TrainConfig {
            gamma: self.gamma,
            tau: self.tau,
            minibatch: self.minibatch,
            capacity: self.capacity,
            episodes_per_tm: self.episodes_per_tm,
            steps_per_episode: self.steps_per_episode,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            cf_samples: self.cf_samples,
            mode,
            ddpg_chain: self.ddpg_chain,
            reward_mode,
            hidden_width: self.hidden_width,
            ou_theta: self.ou_theta,
            ou_sigma: self.ou_sigma,
            ou_mu: self.ou_mu,
            ou_eta: self.ou_eta,
            seed: seed_override.unwrap_or(self.seed),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Inference step counts to sweep; the first is the headline column.
    pub t_values: Vec<usize>,
    pub oracle_granularity: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { t_values: vec![2], oracle_granularity: 0.05 }
    }
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
    match (&config.traffic.file, &config.traffic.gravity) {
        (Some(_), Some(_)) => Err("traffic: specify either `file` or `gravity`, not both".into()),
        (None, None) => Err("traffic: specify `file` or `gravity`".into()),
        _ => Ok(config),
    }
}
