use ndarray::ArrayView2;

use super::losses::{self, expected_rows, max_rows};
use super::{
    check_finite, two_hidden, ActionChoice, Agent, AgentError, AgentKind, AgentParts, AifConfig, LearnTelemetry,
    LearnerConfig, NamedNetwork, NamedTarget,
};
use crate::math::{adam_step, softmax_rows, softmax_with_log, AdamConfig, AdamState, MathError, Mlp};
use crate::replay::{Batch, ReplayBuffer, TargetSnapshot};
use crate::rng::{RngStream, StreamKind};

fn check_dims(observation_dim: usize, action_count: usize) -> Result<(), AgentError> {
    if observation_dim == 0 || action_count < 2 {
        return Err(AgentError::InvalidConfig(format!(
            "observation_dim {observation_dim}, action_count {action_count}"
        )));
    }
    Ok(())
}

fn state_row(state: &[f64], expected: usize) -> Result<ArrayView2<'_, f64>, AgentError> {
    if state.len() != expected {
        return Err(MathError::DimensionMismatch {
            context: "agent state",
            expected,
            actual: state.len(),
        }
        .into());
    }
    Ok(ArrayView2::from_shape((1, state.len()), state).expect("row view"))
}

/// `r + discount * [not terminal] * max_a' Q_target(s', a')`.
fn max_bootstrap_targets(target: &Mlp, batch: &Batch, discount: f64) -> Result<Vec<f64>, AgentError> {
    let next_q = target.predict_batch(batch.next_states.view())?;
    let best = max_rows(next_q.view());
    Ok((0..batch.len())
        .map(|i| {
            let future = if batch.terminal[i] { 0.0 } else { discount * best[i] };
            batch.rewards[i] + future
        })
        .collect())
}

/// Q-learning with Boltzmann exploration over a one-hidden-layer network.
#[derive(Debug, Clone)]
pub struct QAgent {
    config: AifConfig,
    learner: LearnerConfig,
    beta: f64,
    observation_dim: usize,
    action_count: usize,
    q_net: Mlp,
    target: TargetSnapshot,
    optimizer: AdamState,
    steps: u64,
}

impl QAgent {
    pub fn new(
        observation_dim: usize,
        action_count: usize,
        config: AifConfig,
        learner: LearnerConfig,
        beta: f64,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        learner.validate()?;
        check_dims(observation_dim, action_count)?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(AgentError::InvalidConfig(format!("boltzmann beta {beta}")));
        }
        let q_net = Mlp::init(
            &[observation_dim, config.hidden_units, action_count],
            &mut RngStream::for_kind(seed, StreamKind::Init(0)),
        );
        Ok(Self {
            config,
            learner,
            beta,
            observation_dim,
            action_count,
            target: TargetSnapshot::new(&q_net, learner.target_sync_period),
            optimizer: AdamState::new(&q_net, AdamConfig::default()),
            q_net,
            steps: 0,
        })
    }

    pub fn from_parts(mut parts: AgentParts) -> Result<Self, AgentError> {
        if parts.kind != AgentKind::Qlearning {
            return Err(AgentError::StateMismatch(format!("expected qlearning parts, got {}", parts.kind)));
        }
        parts.config.validate()?;
        parts.learner.validate()?;
        let (q_net, optimizer) = parts.take_network("q", parts.observation_dim, parts.action_count)?;
        let target = parts.take_target("q", &q_net)?;
        Ok(Self {
            config: parts.config,
            learner: parts.learner,
            beta: parts.boltzmann_beta,
            observation_dim: parts.observation_dim,
            action_count: parts.action_count,
            q_net,
            target,
            optimizer,
            steps: parts.learn_steps,
        })
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q_net
    }

    pub fn q_net_mut(&mut self) -> &mut Mlp {
        &mut self.q_net
    }

    pub fn target(&self) -> &TargetSnapshot {
        &self.target
    }

    pub fn sync_target(&mut self) {
        self.target.sync(&self.q_net);
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `softmax(beta * Q(s, .))`.
    pub fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        let q = self.q_net.predict_batch(state_row(state, self.observation_dim)?)?;
        let logits: Vec<f64> = q.iter().map(|v| self.beta * v).collect();
        Ok(softmax_with_log(&logits)?.0)
    }

    pub fn q_targets(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        max_bootstrap_targets(self.target.params(), batch, self.config.discount)
    }

    pub fn learn_on_batch(&mut self, batch: &Batch) -> Result<LearnTelemetry, AgentError> {
        let targets = self.q_targets(batch)?;
        let (loss, grads) = losses::value_regression(&self.q_net, batch.states.view(), &batch.actions, &targets)?;
        check_finite(loss, "q loss", self.steps)?;
        adam_step(&mut self.q_net, &grads, &mut self.optimizer, self.config.learning_rate)?;
        self.steps += 1;
        self.target.tick(&self.q_net);
        Ok(LearnTelemetry {
            value_loss: Some(loss),
            ..LearnTelemetry::default()
        })
    }
}

impl Agent for QAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Qlearning
    }

    fn select_action(&self, state: &[f64], rng: &mut RngStream) -> Result<ActionChoice, AgentError> {
        let probs = self.action_probs(state)?;
        Ok(ActionChoice {
            action: rng.categorical(&probs),
            probs,
        })
    }

    fn learn_step(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<LearnTelemetry, AgentError> {
        match buffer.sample_batch(self.learner.batch_size, rng) {
            None => Ok(LearnTelemetry::skipped()),
            Some(batch) => self.learn_on_batch(&batch),
        }
    }

    fn learn_steps(&self) -> u64 {
        self.steps
    }

    fn to_parts(&self) -> AgentParts {
        AgentParts {
            kind: AgentKind::Qlearning,
            observation_dim: self.observation_dim,
            action_count: self.action_count,
            learn_steps: self.steps,
            config: self.config,
            learner: self.learner,
            boltzmann_beta: self.beta,
            networks: vec![NamedNetwork {
                name: "q".into(),
                params: self.q_net.clone(),
                optimizer: self.optimizer.clone(),
            }],
            targets: vec![NamedTarget {
                name: "q".into(),
                snapshot: self.target.clone(),
            }],
        }
    }
}

/// Actor-critic: a softmax policy trained on advantages from a critic that
/// is itself trained by Q-learning with a target network.
#[derive(Debug, Clone)]
pub struct AcAgent {
    config: AifConfig,
    learner: LearnerConfig,
    observation_dim: usize,
    action_count: usize,
    policy_net: Mlp,
    value_net: Mlp,
    target: TargetSnapshot,
    policy_opt: AdamState,
    value_opt: AdamState,
    steps: u64,
}

impl AcAgent {
    pub fn new(
        observation_dim: usize,
        action_count: usize,
        config: AifConfig,
        learner: LearnerConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        learner.validate()?;
        check_dims(observation_dim, action_count)?;
        let h = config.hidden_units;
        let policy_net = Mlp::init(
            &two_hidden(observation_dim, h, action_count),
            &mut RngStream::for_kind(seed, StreamKind::Init(1)),
        );
        let value_net = Mlp::init(
            &two_hidden(observation_dim, h, action_count),
            &mut RngStream::for_kind(seed, StreamKind::Init(2)),
        );
        let adam = AdamConfig::default();
        Ok(Self {
            config,
            learner,
            observation_dim,
            action_count,
            policy_opt: AdamState::new(&policy_net, adam),
            value_opt: AdamState::new(&value_net, adam),
            target: TargetSnapshot::new(&value_net, learner.target_sync_period),
            policy_net,
            value_net,
            steps: 0,
        })
    }

    pub fn from_parts(mut parts: AgentParts) -> Result<Self, AgentError> {
        if parts.kind != AgentKind::Actorcritic {
            return Err(AgentError::StateMismatch(format!("expected actorcritic parts, got {}", parts.kind)));
        }
        parts.config.validate()?;
        parts.learner.validate()?;
        let (d, a) = (parts.observation_dim, parts.action_count);
        let (policy_net, policy_opt) = parts.take_network("policy", d, a)?;
        let (value_net, value_opt) = parts.take_network("value", d, a)?;
        let target = parts.take_target("value", &value_net)?;
        Ok(Self {
            config: parts.config,
            learner: parts.learner,
            observation_dim: d,
            action_count: a,
            policy_net,
            value_net,
            target,
            policy_opt,
            value_opt,
            steps: parts.learn_steps,
        })
    }

    pub fn policy_net(&self) -> &Mlp {
        &self.policy_net
    }

    pub fn value_net(&self) -> &Mlp {
        &self.value_net
    }

    pub fn target(&self) -> &TargetSnapshot {
        &self.target
    }

    pub fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        let logits = self.policy_net.predict_batch(state_row(state, self.observation_dim)?)?;
        Ok(softmax_with_log(logits.as_slice().expect("contiguous"))?.0)
    }

    pub fn critic_targets(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        max_bootstrap_targets(self.target.params(), batch, self.config.discount)
    }

    /// `A(s, a) = Q(s, a) - sum_a' pi(a'|s) Q(s, a')` under the live critic.
    pub fn advantages(&self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        let q = self.value_net.predict_batch(batch.states.view())?;
        let logits = self.policy_net.predict_batch(batch.states.view())?;
        let (probs, _) = softmax_rows(logits.view())?;
        let baseline = expected_rows(probs.view(), q.view());
        Ok((0..batch.len()).map(|i| q[[i, batch.actions[i]]] - baseline[i]).collect())
    }

    pub fn learn_on_batch(&mut self, batch: &Batch) -> Result<LearnTelemetry, AgentError> {
        let step = self.steps;
        let targets = self.critic_targets(batch)?;
        let advantages = self.advantages(batch)?;
        let (critic_loss, critic_grads) =
            losses::value_regression(&self.value_net, batch.states.view(), &batch.actions, &targets)?;
        check_finite(critic_loss, "critic loss", step)?;
        let actor = losses::actor_objective(&self.policy_net, batch.states.view(), &batch.actions, &advantages)?;
        check_finite(actor.loss, "actor loss", step)?;
        let lr = self.config.learning_rate;
        adam_step(&mut self.value_net, &critic_grads, &mut self.value_opt, lr)?;
        adam_step(&mut self.policy_net, &actor.grads, &mut self.policy_opt, lr)?;
        self.steps += 1;
        self.target.tick(&self.value_net);
        Ok(LearnTelemetry {
            value_loss: Some(critic_loss),
            policy_loss: Some(actor.loss),
            ..LearnTelemetry::default()
        })
    }
}

impl Agent for AcAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Actorcritic
    }

    fn select_action(&self, state: &[f64], rng: &mut RngStream) -> Result<ActionChoice, AgentError> {
        let probs = self.action_probs(state)?;
        Ok(ActionChoice {
            action: rng.categorical(&probs),
            probs,
        })
    }

    fn learn_step(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<LearnTelemetry, AgentError> {
        match buffer.sample_batch(self.learner.batch_size, rng) {
            None => Ok(LearnTelemetry::skipped()),
            Some(batch) => self.learn_on_batch(&batch),
        }
    }

    fn learn_steps(&self) -> u64 {
        self.steps
    }

    fn to_parts(&self) -> AgentParts {
        let net = |name: &str, params: &Mlp, optimizer: &AdamState| NamedNetwork {
            name: name.to_string(),
            params: params.clone(),
            optimizer: optimizer.clone(),
        };
        AgentParts {
            kind: AgentKind::Actorcritic,
            observation_dim: self.observation_dim,
            action_count: self.action_count,
            learn_steps: self.steps,
            config: self.config,
            learner: self.learner,
            boltzmann_beta: self.config.gamma_precision,
            networks: vec![
                net("policy", &self.policy_net, &self.policy_opt),
                net("value", &self.value_net, &self.value_opt),
            ],
            targets: vec![NamedTarget {
                name: "value".into(),
                snapshot: self.target.clone(),
            }],
        }
    }
}
