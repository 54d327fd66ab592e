//! Experiment configuration. The file format is flat TOML: one `key = value`
//! per field, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::{AgentKind, AifConfig, LearnerConfig};
use crate::envs::{EnvKind, EnvOptions, DEFAULT_MAX_STEPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub episodes: usize,
    pub trials: usize,
    /// Trial `k` runs with seed `seed + k`.
    pub seed: u64,

    pub gamma_precision: f64,
    pub discount: f64,
    pub entropy_enabled: bool,
    pub epistemic_enabled: bool,
    pub epistemic_weight: f64,
    pub posterior_std: f64,
    pub learning_rate: f64,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub target_sync_period: u64,
    pub replay_capacity: usize,
    /// Inverse temperature of the Q-learning softmax.
    pub boltzmann_beta: f64,

    pub max_steps: usize,
    pub angle_limit_deg: f64,

    pub collapse_window: usize,
    /// Defaults to 50 on CartPole and -450 on Acrobot when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_threshold: Option<f64>,

    pub out_dir: PathBuf,
    /// Progress line every this many episodes per trial; 0 silences it.
    pub log_every: usize,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let agent = AifConfig::default();
        let learner = LearnerConfig::default();
        let env = EnvOptions::default();
        Self {
            env: EnvKind::Cartpole,
            agent: AgentKind::Aif,
            episodes: 15000,
            trials: 20,
            seed: 0,
            gamma_precision: agent.gamma_precision,
            discount: agent.discount,
            entropy_enabled: agent.entropy_enabled,
            epistemic_enabled: agent.epistemic_enabled,
            epistemic_weight: agent.epistemic_weight,
            posterior_std: agent.posterior_std,
            learning_rate: agent.learning_rate,
            hidden_units: agent.hidden_units,
            batch_size: learner.batch_size,
            target_sync_period: learner.target_sync_period,
            replay_capacity: 100_000,
            boltzmann_beta: agent.gamma_precision,
            max_steps: DEFAULT_MAX_STEPS,
            angle_limit_deg: env.angle_limit_deg,
            collapse_window: 100,
            collapse_threshold: None,
            out_dir: PathBuf::from("results"),
            log_every: 0,
            save_checkpoints: false,
        }
    }
}

/// Named trial/episode budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 10 trials; 2000 episodes on CartPole, 1000 on Acrobot.
    Desk,
    /// 20 trials of 15000 episodes.
    Paper,
}

impl Preset {
    pub fn apply(self, config: &mut ExperimentConfig) {
        match self {
            Preset::Desk => {
                config.trials = 10;
                config.episodes = match config.env {
                    EnvKind::Cartpole => 2000,
                    EnvKind::Acrobot => 1000,
                };
            }
            Preset::Paper => {
                config.trials = 20;
                config.episodes = 15000;
            }
        }
    }
}

impl ExperimentConfig {
    /// Default configuration with a preset's budget applied.
    pub fn preset(env: EnvKind, agent: AgentKind, preset: Preset) -> Self {
        let mut config = Self {
            env,
            agent,
            ..Self::default()
        };
        preset.apply(&mut config);
        config
    }

    pub fn agent_config(&self) -> AifConfig {
        AifConfig {
            gamma_precision: self.gamma_precision,
            discount: self.discount,
            entropy_enabled: self.entropy_enabled,
            epistemic_enabled: self.epistemic_enabled,
            epistemic_weight: self.epistemic_weight,
            posterior_std: self.posterior_std,
            learning_rate: self.learning_rate,
            hidden_units: self.hidden_units,
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            batch_size: self.batch_size,
            target_sync_period: self.target_sync_period,
        }
    }

    pub fn env_options(&self) -> EnvOptions {
        EnvOptions {
            max_steps: self.max_steps,
            angle_limit_deg: self.angle_limit_deg,
        }
    }

    pub fn effective_collapse_threshold(&self) -> f64 {
        self.collapse_threshold.unwrap_or(match self.env {
            EnvKind::Cartpole => 50.0,
            EnvKind::Acrobot => -450.0,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        // The file format stores integers as signed 64-bit values.
        if self.seed > i64::MAX as u64 || self.seed.checked_add(self.trials as u64).is_none() {
            return bad(format!("seed {} is out of range", self.seed));
        }
        self.agent_config()
            .validate()
            .and_then(|_| self.learner_config().validate())
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.replay_capacity < self.batch_size {
            return bad(format!(
                "replay_capacity {} is smaller than batch_size {}",
                self.replay_capacity, self.batch_size
            ));
        }
        if !(self.boltzmann_beta > 0.0 && self.boltzmann_beta.is_finite()) {
            return bad(format!("boltzmann_beta must be positive, got {}", self.boltzmann_beta));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.angle_limit_deg > 0.0 && self.angle_limit_deg < 90.0) {
            return bad(format!("angle_limit_deg must lie in (0, 90), got {}", self.angle_limit_deg));
        }
        if self.collapse_window == 0 {
            return bad("collapse_window must be positive".into());
        }
        if self.collapse_threshold.is_some_and(|t| !t.is_finite()) {
            return bad("collapse_threshold must be finite".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::parse("configuration", e.message()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml()).map_err(|e| HarnessError::io(path, e))
    }
}
