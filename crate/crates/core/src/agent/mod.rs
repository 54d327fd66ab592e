//! Agents: the active inference agent and the two reinforcement-learning
//! baselines. All three share the replay buffer, target snapshots and
//! dense-network code.

mod aif;
mod baseline;
pub mod losses;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use aif::{AifAgent, EfeTargetBatch};
pub use baseline::{AcAgent, QAgent};

use crate::math::{AdamState, MathError, Mlp};
use crate::replay::{ReplayBuffer, TargetSnapshot};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("non-finite {what} at learning step {step}")]
    NonFinite { what: &'static str, step: u64 },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown agent '{0}' (expected aif, qlearning or actorcritic)")]
    UnknownName(String),
    #[error("agent state does not match: {0}")]
    StateMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Aif,
    Qlearning,
    Actorcritic,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Aif => "aif",
            AgentKind::Qlearning => "qlearning",
            AgentKind::Actorcritic => "actorcritic",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aif" => Ok(AgentKind::Aif),
            "qlearning" => Ok(AgentKind::Qlearning),
            "actorcritic" => Ok(AgentKind::Actorcritic),
            other => Err(AgentError::UnknownName(other.to_string())),
        }
    }
}

/// Hyperparameters of the active inference agent. The baselines reuse the
/// same values so that comparisons change only the learning rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AifConfig {
    /// Precision (inverse temperature) of the action prior `softmax(-gamma G)`.
    pub gamma_precision: f64,
    pub discount: f64,
    pub entropy_enabled: bool,
    pub epistemic_enabled: bool,
    pub epistemic_weight: f64,
    /// Standard deviation of the Gaussian placed on an observed next state.
    pub posterior_std: f64,
    pub learning_rate: f64,
    pub hidden_units: usize,
}

impl Default for AifConfig {
    fn default() -> Self {
        Self {
            gamma_precision: 1.0,
            discount: 0.99,
            entropy_enabled: true,
            epistemic_enabled: true,
            epistemic_weight: 1.0,
            posterior_std: 0.1,
            learning_rate: 0.001,
            hidden_units: 100,
        }
    }
}

impl AifConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(self.gamma_precision > 0.0 && self.gamma_precision.is_finite()) {
            return bad(format!("gamma_precision must be positive, got {}", self.gamma_precision));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must lie in (0, 1], got {}", self.discount));
        }
        if !(self.epistemic_weight >= 0.0 && self.epistemic_weight.is_finite()) {
            return bad(format!("epistemic_weight must be non-negative, got {}", self.epistemic_weight));
        }
        if !(self.posterior_std > 0.0 && self.posterior_std.is_finite()) {
            return bad(format!("posterior_std must be positive, got {}", self.posterior_std));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive".into());
        }
        Ok(())
    }
}

/// Minibatch and target-network cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub batch_size: usize,
    /// Learning steps between target-network syncs.
    pub target_sync_period: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            target_sync_period: 50,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.batch_size == 0 || self.target_sync_period == 0 {
            return Err(AgentError::InvalidConfig(
                "batch_size and target_sync_period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled action with the distribution it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    pub action: usize,
    pub probs: Vec<f64>,
}

/// Losses from one learning step; `None` marks terms an agent does not have.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnTelemetry {
    /// The buffer held fewer transitions than one batch; nothing was learned.
    pub skipped: bool,
    pub transition_loss: Option<f64>,
    pub transition_mse: Option<f64>,
    /// EFE regression loss for the active inference agent, critic loss for
    /// the baselines.
    pub value_loss: Option<f64>,
    /// Policy divergence, or the actor objective for actor-critic.
    pub policy_loss: Option<f64>,
    /// Mean epistemic term over the batch.
    pub epistemic: Option<f64>,
}

impl LearnTelemetry {
    pub fn skipped() -> Self {
        Self {
            skipped: true,
            ..Self::default()
        }
    }
}

/// A trainable network together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedNetwork {
    pub name: String,
    pub params: Mlp,
    pub optimizer: AdamState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTarget {
    pub name: String,
    pub snapshot: TargetSnapshot,
}

/// Everything needed to rebuild an agent exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParts {
    pub kind: AgentKind,
    pub observation_dim: usize,
    pub action_count: usize,
    pub learn_steps: u64,
    pub config: AifConfig,
    pub learner: LearnerConfig,
    pub boltzmann_beta: f64,
    pub networks: Vec<NamedNetwork>,
    pub targets: Vec<NamedTarget>,
}

impl AgentParts {
    pub(crate) fn take_network(&mut self, name: &str, input: usize, output: usize) -> Result<(Mlp, AdamState), AgentError> {
        let pos = self
            .networks
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| AgentError::StateMismatch(format!("missing network '{name}'")))?;
        let net = self.networks.remove(pos);
        if net.params.input_dim() != input || net.params.output_dim() != output {
            return Err(AgentError::StateMismatch(format!(
                "network '{name}' maps {} -> {}, expected {input} -> {output}",
                net.params.input_dim(),
                net.params.output_dim()
            )));
        }
        if !net.optimizer.matches(&net.params) {
            return Err(AgentError::StateMismatch(format!("optimizer shape for '{name}'")));
        }
        Ok((net.params, net.optimizer))
    }

    pub(crate) fn take_target(&mut self, name: &str, live: &Mlp) -> Result<TargetSnapshot, AgentError> {
        let pos = self
            .targets
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| AgentError::StateMismatch(format!("missing target '{name}'")))?;
        let t = self.targets.remove(pos);
        if t.snapshot.params().shape() != live.shape() {
            return Err(AgentError::StateMismatch(format!("target '{name}' shape differs from live network")));
        }
        Ok(t.snapshot)
    }
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn select_action(&self, state: &[f64], rng: &mut RngStream) -> Result<ActionChoice, AgentError>;

    /// One learning step from a replayed minibatch; a no-op while the
    /// buffer is smaller than one batch.
    fn learn_step(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<LearnTelemetry, AgentError>;

    fn learn_steps(&self) -> u64;

    fn to_parts(&self) -> AgentParts;
}

/// Builds a fresh agent; network initializations draw from streams derived
/// from `seed`.
pub fn build_agent(
    kind: AgentKind,
    observation_dim: usize,
    action_count: usize,
    config: AifConfig,
    learner: LearnerConfig,
    boltzmann_beta: f64,
    seed: u64,
) -> Result<Box<dyn Agent>, AgentError> {
    Ok(match kind {
        AgentKind::Aif => Box::new(AifAgent::new(observation_dim, action_count, config, learner, seed)?),
        AgentKind::Qlearning => Box::new(QAgent::new(
            observation_dim,
            action_count,
            config,
            learner,
            boltzmann_beta,
            seed,
        )?),
        AgentKind::Actorcritic => Box::new(AcAgent::new(observation_dim, action_count, config, learner, seed)?),
    })
}

/// Rebuilds an agent from exported parts.
pub fn agent_from_parts(parts: AgentParts) -> Result<Box<dyn Agent>, AgentError> {
    Ok(match parts.kind {
        AgentKind::Aif => Box::new(AifAgent::from_parts(parts)?),
        AgentKind::Qlearning => Box::new(QAgent::from_parts(parts)?),
        AgentKind::Actorcritic => Box::new(AcAgent::from_parts(parts)?),
    })
}

/// Layer sizes of the two-hidden-layer networks.
pub(crate) fn two_hidden(input: usize, hidden: usize, output: usize) -> [usize; 4] {
    [input, hidden, hidden, output]
}

pub fn one_hot_rows(states: ndarray::ArrayView2<f64>, actions: &[usize], action_count: usize) -> ndarray::Array2<f64> {
    let (n, d) = states.dim();
    let mut x = ndarray::Array2::zeros((n, d + action_count));
    x.slice_mut(ndarray::s![.., ..d]).assign(&states);
    for (i, &a) in actions.iter().enumerate() {
        x[[i, d + a]] = 1.0;
    }
    x
}

pub(crate) fn check_finite(value: f64, what: &'static str, step: u64) -> Result<f64, AgentError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AgentError::NonFinite { what, step })
    }
}
