use ndarray::{Array2, ArrayView2};

use super::losses::{self, expected_rows, split_gaussian_head};
use super::{
    check_finite, one_hot_rows, two_hidden, ActionChoice, Agent, AgentError, AgentKind, AgentParts, AifConfig,
    LearnTelemetry, LearnerConfig, NamedNetwork, NamedTarget,
};
use crate::math::{adam_step, softmax_rows, softmax_with_log, AdamConfig, AdamState, DiagGaussian, Mlp};
use crate::math::{clamp_log_var, gaussian_kl_1d};
use crate::replay::{Batch, ReplayBuffer, TargetSnapshot};
use crate::rng::{RngStream, StreamKind};

/// Bootstrapped expected-free-energy targets for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EfeTargetBatch {
    pub targets: Vec<f64>,
    /// `-reward` per sample.
    pub negative_reward: Vec<f64>,
    pub epistemic: Vec<f64>,
    /// Discounted, terminal-masked `E_pi[G_target(s', .)]` per sample.
    pub future: Vec<f64>,
}

/// Active inference agent: a Gaussian transition model, a policy network
/// `Q(a|s)` and an expected-free-energy network `G(s, .)` with a frozen
/// target copy used for bootstrapping.
#[derive(Debug, Clone)]
pub struct AifAgent {
    config: AifConfig,
    learner: LearnerConfig,
    observation_dim: usize,
    action_count: usize,
    transition_net: Mlp,
    policy_net: Mlp,
    efe_net: Mlp,
    target_efe: TargetSnapshot,
    transition_opt: AdamState,
    policy_opt: AdamState,
    efe_opt: AdamState,
    steps: u64,
}

impl AifAgent {
    pub fn new(
        observation_dim: usize,
        action_count: usize,
        config: AifConfig,
        learner: LearnerConfig,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        learner.validate()?;
        if observation_dim == 0 || action_count < 2 {
            return Err(AgentError::InvalidConfig(format!(
                "observation_dim {observation_dim}, action_count {action_count}"
            )));
        }
        let h = config.hidden_units;
        let transition_net = Mlp::init(
            &two_hidden(observation_dim + action_count, h, 2 * observation_dim),
            &mut RngStream::for_kind(seed, StreamKind::Init(0)),
        );
        let policy_net = Mlp::init(
            &two_hidden(observation_dim, h, action_count),
            &mut RngStream::for_kind(seed, StreamKind::Init(1)),
        );
        let efe_net = Mlp::init(
            &two_hidden(observation_dim, h, action_count),
            &mut RngStream::for_kind(seed, StreamKind::Init(2)),
        );
        let adam = AdamConfig::default();
        Ok(Self {
            config,
            learner,
            observation_dim,
            action_count,
            transition_opt: AdamState::new(&transition_net, adam),
            policy_opt: AdamState::new(&policy_net, adam),
            efe_opt: AdamState::new(&efe_net, adam),
            target_efe: TargetSnapshot::new(&efe_net, learner.target_sync_period),
            transition_net,
            policy_net,
            efe_net,
            steps: 0,
        })
    }

    pub fn from_parts(mut parts: AgentParts) -> Result<Self, AgentError> {
        if parts.kind != AgentKind::Aif {
            return Err(AgentError::StateMismatch(format!("expected aif parts, got {}", parts.kind)));
        }
        parts.config.validate()?;
        parts.learner.validate()?;
        let (d, a) = (parts.observation_dim, parts.action_count);
        let (transition_net, transition_opt) = parts.take_network("transition", d + a, 2 * d)?;
        let (policy_net, policy_opt) = parts.take_network("policy", d, a)?;
        let (efe_net, efe_opt) = parts.take_network("efe", d, a)?;
        let target_efe = parts.take_target("efe", &efe_net)?;
        Ok(Self {
            config: parts.config,
            learner: parts.learner,
            observation_dim: d,
            action_count: a,
            transition_net,
            policy_net,
            efe_net,
            target_efe,
            transition_opt,
            policy_opt,
            efe_opt,
            steps: parts.learn_steps,
        })
    }

    pub fn config(&self) -> &AifConfig {
        &self.config
    }

    pub fn transition_net(&self) -> &Mlp {
        &self.transition_net
    }

    pub fn policy_net(&self) -> &Mlp {
        &self.policy_net
    }

    pub fn efe_net(&self) -> &Mlp {
        &self.efe_net
    }

    pub fn policy_net_mut(&mut self) -> &mut Mlp {
        &mut self.policy_net
    }

    pub fn efe_net_mut(&mut self) -> &mut Mlp {
        &mut self.efe_net
    }

    pub fn transition_net_mut(&mut self) -> &mut Mlp {
        &mut self.transition_net
    }

    pub fn target(&self) -> &TargetSnapshot {
        &self.target_efe
    }

    /// Forces the target snapshot to the current EFE network.
    pub fn sync_target(&mut self) {
        self.target_efe.sync(&self.efe_net);
    }

    fn check_state(&self, state: &[f64]) -> Result<(), AgentError> {
        if state.len() != self.observation_dim {
            return Err(crate::math::MathError::DimensionMismatch {
                context: "agent state",
                expected: self.observation_dim,
                actual: state.len(),
            }
            .into());
        }
        Ok(())
    }

    /// Action probabilities `Q(a|s)` for one state.
    pub fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.check_state(state)?;
        let (logits, _) = self.policy_net.forward(state)?;
        let (probs, _) = softmax_with_log(logits.as_slice().expect("contiguous"))?;
        Ok(probs)
    }

    /// Predicted Gaussian over the next state.
    pub fn transition_predict(&self, state: &[f64], action: usize) -> Result<DiagGaussian, AgentError> {
        self.check_state(state)?;
        if action >= self.action_count {
            return Err(AgentError::InvalidConfig(format!("action {action} out of range")));
        }
        let input = one_hot_rows(
            ArrayView2::from_shape((1, state.len()), state).expect("row view"),
            &[action],
            self.action_count,
        );
        let out = self.transition_net.predict_batch(input.view())?;
        let d = self.observation_dim;
        Ok(DiagGaussian::new(
            out.row(0).iter().take(d).copied().collect(),
            out.row(0).iter().skip(d).copied().collect(),
        )?)
    }

    /// `-lambda * KL(N(next_state, sigma_post^2 I) || prediction)`; zero when
    /// the epistemic term is disabled. Poorly predicted transitions get a
    /// lower (more attractive) expected free energy.
    pub fn epistemic_bonus(&self, state: &[f64], action: usize, next_state: &[f64]) -> Result<f64, AgentError> {
        if !self.config.epistemic_enabled {
            return Ok(0.0);
        }
        let prediction = self.transition_predict(state, action)?;
        let posterior = DiagGaussian::isotropic(next_state.to_vec(), self.config.posterior_std)?;
        let kl = crate::math::diag_gaussian_kl(&posterior, &prediction)?;
        Ok(-self.config.epistemic_weight * kl)
    }

    fn epistemic_from_prediction(&self, mean: &Array2<f64>, log_var: &Array2<f64>, next_states: ArrayView2<f64>) -> Vec<f64> {
        let n = next_states.nrows();
        if !self.config.epistemic_enabled {
            return vec![0.0; n];
        }
        let lv_post = clamp_log_var(2.0 * self.config.posterior_std.ln());
        (0..n)
            .map(|i| {
                let kl: f64 = (0..self.observation_dim)
                    .map(|j| gaussian_kl_1d(next_states[[i, j]], lv_post, mean[[i, j]], log_var[[i, j]]))
                    .sum();
                -self.config.epistemic_weight * kl
            })
            .collect()
    }

    fn transition_inputs(&self, batch: &Batch) -> Array2<f64> {
        one_hot_rows(batch.states.view(), &batch.actions, self.action_count)
    }

    /// `G_hat = -r + eps + discount * [not terminal] * sum_a' pi(a'|s') G_target(s', a')`.
    pub fn efe_targets(&self, batch: &Batch) -> Result<EfeTargetBatch, AgentError> {
        let epistemic = if self.config.epistemic_enabled {
            let out = self.transition_net.predict_batch(self.transition_inputs(batch).view())?;
            let (mean, log_var) = split_gaussian_head(out.view());
            self.epistemic_from_prediction(&mean, &log_var, batch.next_states.view())
        } else {
            vec![0.0; batch.len()]
        };
        self.targets_with_epistemic(batch, epistemic)
    }

    fn targets_with_epistemic(&self, batch: &Batch, epistemic: Vec<f64>) -> Result<EfeTargetBatch, AgentError> {
        let next_logits = self.policy_net.predict_batch(batch.next_states.view())?;
        let (next_probs, _) = softmax_rows(next_logits.view())?;
        let next_g = self.target_efe.params().predict_batch(batch.next_states.view())?;
        let bootstrap = expected_rows(next_probs.view(), next_g.view());
        let n = batch.len();
        let mut out = EfeTargetBatch {
            targets: Vec::with_capacity(n),
            negative_reward: Vec::with_capacity(n),
            epistemic,
            future: Vec::with_capacity(n),
        };
        for (i, boot) in bootstrap.iter().enumerate() {
            let future = if batch.terminal[i] {
                0.0
            } else {
                self.config.discount * boot
            };
            let neg_r = -batch.rewards[i];
            out.targets.push(neg_r + out.epistemic[i] + future);
            out.negative_reward.push(neg_r);
            out.future.push(future);
        }
        Ok(out)
    }

    /// One Adam step on the transition network; returns (NLL, mean-squared
    /// prediction error).
    pub fn transition_update(&mut self, batch: &Batch) -> Result<(f64, f64), AgentError> {
        let inputs = self.transition_inputs(batch);
        let t = losses::transition_nll(&self.transition_net, inputs.view(), batch.next_states.view())?;
        check_finite(t.loss, "transition loss", self.steps)?;
        adam_step(&mut self.transition_net, &t.grads, &mut self.transition_opt, self.config.learning_rate)?;
        Ok((t.loss, t.mse))
    }

    /// Regresses `G(s, a)` onto the bootstrapped targets; targets are constants.
    pub fn efe_update(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let targets = self.efe_targets(batch)?;
        self.efe_update_with(batch, &targets.targets)
    }

    fn efe_update_with(&mut self, batch: &Batch, targets: &[f64]) -> Result<f64, AgentError> {
        let (loss, grads) = losses::value_regression(&self.efe_net, batch.states.view(), &batch.actions, targets)?;
        check_finite(loss, "efe loss", self.steps)?;
        adam_step(&mut self.efe_net, &grads, &mut self.efe_opt, self.config.learning_rate)?;
        Ok(loss)
    }

    /// `log softmax(-gamma G(s, .))` from the live EFE network, treated as a
    /// constant by the policy update.
    pub fn action_prior(&self, states: ArrayView2<f64>) -> Result<Array2<f64>, AgentError> {
        let g = self.efe_net.predict_batch(states)?;
        let (_, log_p) = softmax_rows((g * -self.config.gamma_precision).view())?;
        Ok(log_p)
    }

    /// Moves `Q(a|s)` toward `p(a|s) = softmax(-gamma G(s, .))`.
    pub fn policy_update(&mut self, batch: &Batch) -> Result<f64, AgentError> {
        let log_prior = self.action_prior(batch.states.view())?;
        self.policy_update_with(batch, log_prior.view())
    }

    fn policy_update_with(&mut self, batch: &Batch, log_prior: ArrayView2<f64>) -> Result<f64, AgentError> {
        let p = losses::policy_divergence(
            &self.policy_net,
            batch.states.view(),
            log_prior,
            self.config.entropy_enabled,
        )?;
        check_finite(p.loss, "policy loss", self.steps)?;
        adam_step(&mut self.policy_net, &p.grads, &mut self.policy_opt, self.config.learning_rate)?;
        Ok(p.loss)
    }

    /// Runs one full update on a given batch. Every quantity that feeds a
    /// loss (epistemic term, bootstrap, action prior) is evaluated before any
    /// network moves; then the transition, EFE and policy networks each take
    /// one Adam step and the target counter advances.
    pub fn learn_on_batch(&mut self, batch: &Batch) -> Result<LearnTelemetry, AgentError> {
        let step = self.steps;
        let inputs = self.transition_inputs(batch);
        let trans = losses::transition_nll(&self.transition_net, inputs.view(), batch.next_states.view())?;
        check_finite(trans.loss, "transition loss", step)?;
        let epistemic = self.epistemic_from_prediction(&trans.mean, &trans.log_var, batch.next_states.view());
        let targets = self.targets_with_epistemic(batch, epistemic)?;
        if targets.targets.iter().any(|t| !t.is_finite()) {
            return Err(AgentError::NonFinite { what: "efe target", step });
        }

        let (g, g_cache) = self.efe_net.forward_batch(batch.states.view())?;
        let (_, log_prior) = softmax_rows((&g * -self.config.gamma_precision).view())?;
        let (efe_loss, efe_grads) =
            losses::value_regression_from(&self.efe_net, &g, &g_cache, &batch.actions, &targets.targets)?;
        check_finite(efe_loss, "efe loss", step)?;
        let policy = losses::policy_divergence(
            &self.policy_net,
            batch.states.view(),
            log_prior.view(),
            self.config.entropy_enabled,
        )?;
        check_finite(policy.loss, "policy loss", step)?;

        let lr = self.config.learning_rate;
        adam_step(&mut self.transition_net, &trans.grads, &mut self.transition_opt, lr)?;
        adam_step(&mut self.efe_net, &efe_grads, &mut self.efe_opt, lr)?;
        adam_step(&mut self.policy_net, &policy.grads, &mut self.policy_opt, lr)?;
        self.steps += 1;
        self.target_efe.tick(&self.efe_net);

        let mean_eps = targets.epistemic.iter().sum::<f64>() / batch.len() as f64;
        Ok(LearnTelemetry {
            skipped: false,
            transition_loss: Some(trans.loss),
            transition_mse: Some(trans.mse),
            value_loss: Some(efe_loss),
            policy_loss: Some(policy.loss),
            epistemic: Some(mean_eps),
        })
    }
}

impl Agent for AifAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Aif
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
            kind: AgentKind::Aif,
            observation_dim: self.observation_dim,
            action_count: self.action_count,
            learn_steps: self.steps,
            config: self.config,
            learner: self.learner,
            boltzmann_beta: self.config.gamma_precision,
            networks: vec![
                net("transition", &self.transition_net, &self.transition_opt),
                net("policy", &self.policy_net, &self.policy_opt),
                net("efe", &self.efe_net, &self.efe_opt),
            ],
            targets: vec![NamedTarget {
                name: "efe".into(),
                snapshot: self.target_efe.clone(),
            }],
        }
    }
}
