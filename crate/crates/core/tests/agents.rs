mod common;

use approx::assert_abs_diff_eq;
use common::{batch, constant_output, random_batch, transition};
use deep_aif::agent::losses::{actor_objective, policy_divergence, transition_nll, value_regression};
use deep_aif::agent::{
    build_agent, one_hot_rows, AcAgent, Agent, AgentKind, AifAgent, AifConfig, LearnerConfig, QAgent,
};
use deep_aif::math::softmax_rows;
use deep_aif::replay::{ReplayBuffer, Transition};
use deep_aif::rng::RngStream;
use deep_aif::selfcheck::{gradient_errors, FIXTURES, GRADIENT_TOLERANCE};
use ndarray::{array, Array2};

fn aif(obs: usize, actions: usize, config: AifConfig, seed: u64) -> AifAgent {
    AifAgent::new(obs, actions, config, LearnerConfig::default(), seed).unwrap()
}

fn no_eps() -> AifConfig {
    AifConfig {
        epistemic_enabled: false,
        ..AifConfig::default()
    }
}

#[test]
fn every_loss_matches_finite_differences() {
    for (name, err) in gradient_errors(FIXTURES) {
        assert!(err <= GRADIENT_TOLERANCE, "{name}: {err:e}");
    }
}

#[test]
fn terminal_targets_are_negative_reward() {
    let mut rng = RngStream::new(4, 0);
    let agent = aif(4, 2, no_eps(), 1);
    let b = random_batch(32, 4, 2, 1.0, &mut rng);
    let t = agent.efe_targets(&b).unwrap();
    for i in 0..b.len() {
        assert_eq!(t.targets[i], -b.rewards[i]);
        assert_eq!(t.future[i], 0.0);
    }
}

#[test]
fn cartpole_step_with_zero_target_gives_minus_one() {
    let mut agent = aif(4, 2, no_eps(), 2);
    constant_output(agent.efe_net_mut(), &[0.0, 0.0]);
    agent.sync_target();
    let b = batch(&[transition(vec![0.01, 0.0, -0.02, 0.03], 1, 1.0, vec![0.01, 0.2, -0.02, -0.27], false)]);
    assert_eq!(agent.efe_targets(&b).unwrap().targets, vec![-1.0]);
}

#[test]
fn bootstrap_is_expectation_under_policy() {
    let config = AifConfig {
        discount: 1.0,
        ..no_eps()
    };
    let mut agent = aif(3, 2, config, 3);
    constant_output(agent.policy_net_mut(), &[0.0, 0.0]);
    constant_output(agent.efe_net_mut(), &[2.0, 4.0]);
    agent.sync_target();
    let b = batch(&[transition(vec![0.1, 0.2, 0.3], 0, 0.0, vec![0.3, 0.2, 0.1], false)]);
    assert_eq!(agent.efe_targets(&b).unwrap().targets, vec![3.0]);
}

#[test]
fn bootstrap_matches_enumeration_over_actions() {
    let mut rng = RngStream::new(5, 0);
    for actions in [2, 3] {
        let mut agent = aif(4, actions, AifConfig::default(), 7);
        // Move the live nets away from the target so the test sees which one is used.
        let train = random_batch(64, 4, actions, 0.2, &mut rng);
        for _ in 0..20 {
            agent.learn_on_batch(&train).unwrap();
        }
        let b = random_batch(16, 4, actions, 0.3, &mut rng);
        let t = agent.efe_targets(&b).unwrap();
        for i in 0..b.len() {
            let s2: Vec<f64> = b.next_states.row(i).to_vec();
            let probs = agent.action_probs(&s2).unwrap();
            let (g, _) = agent.target().params().forward(&s2).unwrap();
            let mut expected = 0.0;
            for a in 0..actions {
                expected += probs[a] * g[a];
            }
            let future = if b.terminal[i] { 0.0 } else { 0.99 * expected };
            assert_abs_diff_eq!(t.future[i], future, epsilon = 1e-12);
            let s: Vec<f64> = b.states.row(i).to_vec();
            let eps = agent.epistemic_bonus(&s, b.actions[i], &s2).unwrap();
            assert_abs_diff_eq!(t.epistemic[i], eps, epsilon = 1e-10);
            assert_abs_diff_eq!(t.targets[i], -b.rewards[i] + eps + future, epsilon = 1e-10);
        }
    }
}

#[test]
fn ablation_reduces_to_reward_only_targets() {
    let mut rng = RngStream::new(6, 0);
    let b = random_batch(40, 4, 2, 0.25, &mut rng);
    let full = aif(4, 2, AifConfig::default(), 11);
    let ablated = aif(4, 2, no_eps(), 11);
    let tf = full.efe_targets(&b).unwrap();
    let ta = ablated.efe_targets(&b).unwrap();
    assert!(ta.epistemic.iter().all(|e| *e == 0.0));
    assert!(tf.epistemic.iter().any(|e| *e < 0.0));
    assert_eq!(ta.negative_reward, tf.negative_reward);
    assert_eq!(ta.future, tf.future);
    for i in 0..b.len() {
        assert_eq!(ta.targets[i], ta.negative_reward[i] + ta.future[i]);
        assert_eq!(tf.targets[i], tf.negative_reward[i] + tf.epistemic[i] + tf.future[i]);
    }
}

#[test]
fn updates_leave_other_networks_bitwise_unchanged() {
    let mut rng = RngStream::new(8, 0);
    let b = random_batch(64, 4, 2, 0.1, &mut rng);
    let mut agent = aif(4, 2, AifConfig::default(), 12);

    let (efe, trans, target) = (agent.efe_net().clone(), agent.transition_net().clone(), agent.target().clone());
    agent.policy_update(&b).unwrap();
    assert_eq!(agent.efe_net(), &efe);
    assert_eq!(agent.transition_net(), &trans);
    assert_eq!(agent.target(), &target);

    let (policy, trans) = (agent.policy_net().clone(), agent.transition_net().clone());
    agent.efe_update(&b).unwrap();
    assert_eq!(agent.policy_net(), &policy);
    assert_eq!(agent.transition_net(), &trans);
    assert_eq!(agent.target(), &target);

    let (policy, efe) = (agent.policy_net().clone(), agent.efe_net().clone());
    agent.transition_update(&b).unwrap();
    assert_eq!(agent.policy_net(), &policy);
    assert_eq!(agent.efe_net(), &efe);
}

#[test]
fn fused_step_uses_pre_update_quantities() {
    let mut rng = RngStream::new(9, 0);
    let b = random_batch(64, 4, 2, 0.1, &mut rng);
    let mut fused = aif(4, 2, AifConfig::default(), 13);
    let mut split = fused.clone();

    // Split path with every input captured before anything moves.
    let targets = split.efe_targets(&b).unwrap().targets;
    let prior = split.action_prior(b.states.view()).unwrap();
    let (_, grads) = value_regression(split.efe_net(), b.states.view(), &b.actions, &targets).unwrap();
    let p = policy_divergence(split.policy_net(), b.states.view(), prior.view(), true).unwrap();
    let inputs = one_hot_rows(b.states.view(), &b.actions, 2);
    let t = transition_nll(split.transition_net(), inputs.view(), b.next_states.view()).unwrap();
    split.transition_update(&b).unwrap();

    let telemetry = fused.learn_on_batch(&b).unwrap();
    assert_eq!(telemetry.transition_loss, Some(t.loss));
    assert_eq!(telemetry.policy_loss, Some(p.loss));
    assert_eq!(fused.transition_net(), split.transition_net());
    assert!(grads.is_finite());
    assert_eq!(fused.learn_steps(), 1);
}

#[test]
fn precision_sharpens_the_action_prior() {
    let mut rng = RngStream::new(10, 0);
    let states = Array2::from_shape_simple_fn((20, 4), || rng.uniform_range(-1.0, 1.0));
    let mut last: Option<Vec<f64>> = None;
    for gamma in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let config = AifConfig {
            gamma_precision: gamma,
            ..AifConfig::default()
        };
        let mut agent = aif(4, 3, config, 14);
        constant_output(agent.efe_net_mut(), &[1.0, -0.5, 0.25]);
        let log_p = agent.action_prior(states.view()).unwrap();
        let p_min: Vec<f64> = log_p.column(1).iter().map(|l| l.exp()).collect();
        if let Some(prev) = &last {
            assert!(p_min.iter().zip(prev).all(|(now, before)| now > before));
        }
        last = Some(p_min);
    }
}

#[test]
fn policy_loss_vanishes_when_q_equals_prior() {
    let agent = aif(4, 3, AifConfig::default(), 15);
    let mut rng = RngStream::new(11, 0);
    let states = Array2::from_shape_simple_fn((10, 4), || rng.uniform_range(-1.0, 1.0));
    let logits = agent.policy_net().predict_batch(states.view()).unwrap();
    let (_, log_q) = softmax_rows(logits.view()).unwrap();
    let p = policy_divergence(agent.policy_net(), states.view(), log_q.view(), true).unwrap();
    assert_abs_diff_eq!(p.loss, 0.0, epsilon = 1e-14);
    assert!(p.grads.max_abs() < 1e-14);
}

#[test]
fn flat_prior_drives_policy_toward_uniform() {
    let config = AifConfig {
        gamma_precision: 1e-9,
        ..AifConfig::default()
    };
    let mut agent = aif(4, 2, config, 16);
    constant_output(agent.policy_net_mut(), &[2.0, -2.0]);
    let mut rng = RngStream::new(12, 0);
    let b = random_batch(64, 4, 2, 0.0, &mut rng);
    let start = agent.action_probs(&[0.0; 4]).unwrap();
    assert!(start[0] > 0.95);
    let mut prev = f64::INFINITY;
    for _ in 0..2000 {
        let loss = agent.policy_update(&b).unwrap();
        assert!(loss >= -1e-12);
        prev = prev.min(loss);
    }
    let end = agent.action_probs(&[0.0; 4]).unwrap();
    assert!((end[0] - 0.5).abs() < 0.05, "{end:?}");
    assert!(prev < 0.01);
}

#[test]
fn transition_log_variance_is_clamped() {
    let mut agent = aif(4, 2, AifConfig::default(), 17);
    constant_output(agent.transition_net_mut(), &[0.0, 0.0, 0.0, 0.0, 10.0, -10.0, 1.0, 10.0]);
    let g = agent.transition_predict(&[0.1, 0.2, 0.3, 0.4], 1).unwrap();
    assert_eq!(g.dim(), 4);
    assert_eq!(g.log_var(), &[2.0, -6.0, 1.0, 2.0]);
}

#[test]
fn transition_nll_closed_form() {
    let mut agent = aif(2, 2, AifConfig::default(), 18);
    constant_output(agent.transition_net_mut(), &[0.3, -0.7, 0.0, 0.0]);
    let inputs = one_hot_rows(array![[0.5, 0.5]].view(), &[0], 2);
    let exact = transition_nll(agent.transition_net(), inputs.view(), array![[0.3, -0.7]].view()).unwrap();
    assert_abs_diff_eq!(exact.loss, 2.0 * 0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
    assert_eq!(exact.mse, 0.0);
    let mut prev = exact.loss;
    for err in [0.1, 0.5, 1.0, 2.0] {
        let t = transition_nll(agent.transition_net(), inputs.view(), array![[0.3 + err, -0.7]].view()).unwrap();
        assert!(t.loss > prev);
        prev = t.loss;
    }
}

#[test]
fn epistemic_bonus_properties() {
    let mut agent = aif(2, 2, AifConfig::default(), 19);
    let s = [0.1, 0.2];
    // Prediction exactly matching the posterior proxy gives zero.
    let lv = 2.0 * 0.1f64.ln();
    constant_output(agent.transition_net_mut(), &[0.5, -0.5, lv, lv]);
    assert_abs_diff_eq!(agent.epistemic_bonus(&s, 0, &[0.5, -0.5]).unwrap(), 0.0, epsilon = 1e-12);
    constant_output(agent.transition_net_mut(), &[0.5, -0.5, 0.0, 0.0]);
    let near = agent.epistemic_bonus(&s, 0, &[0.6, -0.4]).unwrap();
    let far = agent.epistemic_bonus(&s, 0, &[0.7, -0.3]).unwrap();
    assert!(far < near && near < 0.0);
    let off = aif(2, 2, no_eps(), 19);
    assert_eq!(off.epistemic_bonus(&s, 1, &[9.0, 9.0]).unwrap(), 0.0);
}

#[test]
fn efe_regression_converges_on_a_frozen_batch() {
    let mut rng = RngStream::new(13, 0);
    let b = random_batch(64, 4, 2, 0.2, &mut rng);
    let mut agent = aif(4, 2, AifConfig::default(), 20);
    let first = agent.efe_update(&b).unwrap();
    let mut last = first;
    for _ in 0..100 {
        last = agent.efe_update(&b).unwrap();
    }
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn efe_loss_is_zero_at_the_targets() {
    let config = AifConfig {
        discount: 1.0,
        ..no_eps()
    };
    let mut agent = aif(3, 2, config, 21);
    constant_output(agent.efe_net_mut(), &[-1.0, -1.0]);
    constant_output(agent.policy_net_mut(), &[0.0, 0.0]);
    agent.sync_target();
    // Terminal transitions with reward 1 have target -1, which the net already outputs.
    let b = batch(&[
        transition(vec![0.1, 0.2, 0.3], 0, 1.0, vec![0.0; 3], true),
        transition(vec![0.3, 0.2, 0.1], 1, 1.0, vec![0.0; 3], true),
    ]);
    let before = agent.efe_net().clone();
    assert_eq!(agent.efe_update(&b).unwrap(), 0.0);
    assert_eq!(agent.efe_net(), &before);
}

#[test]
fn target_syncs_exactly_at_the_period() {
    let mut rng = RngStream::new(14, 0);
    let b = random_batch(64, 4, 2, 0.1, &mut rng);
    let mut agent = aif(4, 2, AifConfig::default(), 22);
    let initial = agent.target().params().clone();
    for _ in 0..49 {
        agent.learn_on_batch(&b).unwrap();
        assert_eq!(agent.target().params(), &initial);
    }
    agent.learn_on_batch(&b).unwrap();
    assert_eq!(agent.target().params(), agent.efe_net());
    assert_ne!(agent.target().params(), &initial);
}

#[test]
fn learn_step_skips_until_a_batch_is_available() {
    let mut agent = build_agent(AgentKind::Aif, 2, 2, AifConfig::default(), LearnerConfig::default(), 1.0, 0).unwrap();
    let mut buffer = ReplayBuffer::new(1000);
    let mut rng = RngStream::new(15, 0);
    for k in 0..64 {
        let t = agent.learn_step(&buffer, &mut rng).unwrap();
        assert!(t.skipped);
        buffer.push(transition(vec![k as f64 * 0.01, 0.0], k % 2, 1.0, vec![0.0, 0.0], false));
    }
    let t = agent.learn_step(&buffer, &mut rng).unwrap();
    assert!(!t.skipped);
    assert!(t.transition_loss.is_some() && t.value_loss.is_some() && t.policy_loss.is_some());
    assert_eq!(agent.learn_steps(), 1);
}

#[test]
fn action_probabilities_are_normalized() {
    let mut rng = RngStream::new(16, 0);
    for kind in [AgentKind::Aif, AgentKind::Qlearning, AgentKind::Actorcritic] {
        let agent = build_agent(kind, 6, 3, AifConfig::default(), LearnerConfig::default(), 1.0, 3).unwrap();
        for _ in 0..1000 {
            let s: Vec<f64> = (0..6).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
            let choice = agent.select_action(&s, &mut rng).unwrap();
            assert!((choice.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(choice.action < 3);
        }
    }
}

#[test]
fn zero_logits_give_uniform_actions_and_sampling_is_seeded() {
    let mut agent = aif(4, 2, AifConfig::default(), 23);
    constant_output(agent.policy_net_mut(), &[0.0, 0.0]);
    assert_eq!(agent.action_probs(&[0.3, -0.1, 0.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    let draw = |seed| {
        let mut rng = RngStream::new(seed, 2);
        (0..20).map(|_| agent.select_action(&[0.0; 4], &mut rng).unwrap().action).collect::<Vec<_>>()
    };
    assert_eq!(draw(1), draw(1));
}

#[test]
fn q_boltzmann_examples() {
    let mut q = QAgent::new(2, 2, AifConfig::default(), LearnerConfig::default(), 50.0, 0).unwrap();
    constant_output(q.q_net_mut(), &[0.0, 1.0]);
    assert!(q.action_probs(&[0.2, 0.1]).unwrap()[1] > 0.99);
    let mut flat = QAgent::new(2, 3, AifConfig::default(), LearnerConfig::default(), 1.0, 0).unwrap();
    constant_output(flat.q_net_mut(), &[0.7, 0.7, 0.7]);
    for p in flat.action_probs(&[1.0, -1.0]).unwrap() {
        assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn q_targets_examples() {
    let mut q = QAgent::new(2, 2, AifConfig::default(), LearnerConfig::default(), 1.0, 0).unwrap();
    constant_output(q.q_net_mut(), &[0.0, 0.0]);
    q.sync_target();
    let b = batch(&[
        transition(vec![0.1, 0.2], 0, 1.0, vec![0.3, 0.4], false),
        transition(vec![0.1, 0.2], 1, 2.5, vec![0.3, 0.4], true),
    ]);
    assert_eq!(q.q_targets(&b).unwrap(), vec![1.0, 2.5]);
    constant_output(q.q_net_mut(), &[3.0, 5.0]);
    q.sync_target();
    assert_eq!(q.q_targets(&b).unwrap(), vec![1.0 + 0.99 * 5.0, 2.5]);
}

#[test]
fn actor_gradient_examples() {
    let ac = AcAgent::new(3, 2, AifConfig::default(), LearnerConfig::default(), 0).unwrap();
    let mut rng = RngStream::new(17, 0);
    let b = random_batch(16, 3, 2, 0.0, &mut rng);
    let zero = actor_objective(ac.policy_net(), b.states.view(), &b.actions, &[0.0; 16]).unwrap();
    assert_eq!(zero.grads.max_abs(), 0.0);

    // One gradient-descent step along a positive advantage raises pi(a|s).
    let s = [0.4, -0.2, 0.9];
    let one = batch(&[transition(s.to_vec(), 1, 0.0, vec![0.0; 3], false)]);
    let before = ac.action_probs(&s).unwrap()[1];
    let p = actor_objective(ac.policy_net(), one.states.view(), &[1], &[1.0]).unwrap();
    let mut net = ac.policy_net().clone();
    for (layer, g) in net.layers_mut().iter_mut().zip(&p.grads.layers) {
        layer.weights.scaled_add(-1e-3, &g.weights);
        layer.bias.scaled_add(-1e-3, &g.bias);
    }
    let (logits, _) = net.forward(&s).unwrap();
    let after = deep_aif::math::softmax_with_log(logits.as_slice().unwrap()).unwrap().0[1];
    assert!(after > before);
}

#[test]
fn advantages_are_centred_under_the_policy() {
    let mut rng = RngStream::new(18, 0);
    let ac = AcAgent::new(3, 3, AifConfig::default(), LearnerConfig::default(), 4).unwrap();
    let b = random_batch(8, 3, 3, 0.0, &mut rng);
    let q = ac.value_net().predict_batch(b.states.view()).unwrap();
    let logits = ac.policy_net().predict_batch(b.states.view()).unwrap();
    let (pi, _) = softmax_rows(logits.view()).unwrap();
    let adv = ac.advantages(&b).unwrap();
    for i in 0..b.len() {
        let mean: f64 = (0..3).map(|a| pi[[i, a]] * q[[i, a]]).sum();
        assert_abs_diff_eq!(adv[i], q[[i, b.actions[i]]] - mean, epsilon = 1e-12);
    }
}

#[test]
fn architectures_match() {
    let c = AifConfig::default();
    let l = LearnerConfig::default();
    let a = aif(4, 2, c, 0);
    let ac = AcAgent::new(4, 2, c, l, 0).unwrap();
    let q = QAgent::new(4, 2, c, l, 1.0, 0).unwrap();
    assert_eq!(ac.policy_net().shape(), a.policy_net().shape());
    assert_eq!(ac.value_net().shape(), a.efe_net().shape());
    assert_eq!(a.policy_net().shape(), vec![(100, 4), (100, 100), (2, 100)]);
    assert_eq!(a.transition_net().shape(), vec![(100, 6), (100, 100), (8, 100)]);
    assert_eq!(q.q_net().hidden_layer_count(), 1);
    assert_eq!(q.q_net().shape(), vec![(100, 4), (2, 100)]);
}

#[test]
fn baselines_learn_with_shared_machinery() {
    let mut rng = RngStream::new(19, 0);
    let b = random_batch(64, 4, 2, 0.3, &mut rng);
    let mut q = QAgent::new(4, 2, AifConfig::default(), LearnerConfig::default(), 1.0, 1).unwrap();
    let first = q.learn_on_batch(&b).unwrap().value_loss.unwrap();
    let mut last = first;
    for _ in 0..48 {
        last = q.learn_on_batch(&b).unwrap().value_loss.unwrap();
    }
    assert!(last < first);
    assert_eq!(q.target().steps_since_sync(), 49);
    q.learn_on_batch(&b).unwrap();
    assert_eq!(q.target().params(), q.q_net());

    let mut ac = AcAgent::new(4, 2, AifConfig::default(), LearnerConfig::default(), 1).unwrap();
    let t = ac.learn_on_batch(&b).unwrap();
    assert!(t.value_loss.unwrap().is_finite() && t.policy_loss.unwrap().is_finite());
    assert!(t.transition_loss.is_none());
}

#[test]
fn agents_round_trip_through_parts() {
    let mut rng = RngStream::new(20, 0);
    let b = random_batch(64, 4, 2, 0.1, &mut rng);
    for kind in [AgentKind::Aif, AgentKind::Qlearning, AgentKind::Actorcritic] {
        let mut agent = build_agent(kind, 4, 2, AifConfig::default(), LearnerConfig::default(), 1.0, 9).unwrap();
        let mut buffer = ReplayBuffer::new(100);
        for i in 0..b.len() {
            buffer.push(Transition {
                state: b.states.row(i).to_vec(),
                action: b.actions[i],
                reward: b.rewards[i],
                next_state: b.next_states.row(i).to_vec(),
                terminal: b.terminal[i],
                truncated: false,
            });
        }
        for _ in 0..3 {
            agent.learn_step(&buffer, &mut rng).unwrap();
        }
        let parts = agent.to_parts();
        let rebuilt = deep_aif::agent::agent_from_parts(parts.clone()).unwrap();
        assert_eq!(rebuilt.to_parts(), parts);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let agent = aif(4, 2, AifConfig::default(), 0);
    assert!(agent.action_probs(&[0.0; 3]).is_err());
    assert!(agent.transition_predict(&[0.0; 4], 2).is_err());
    let bad = AifConfig {
        discount: 0.0,
        ..AifConfig::default()
    };
    assert!(AifAgent::new(4, 2, bad, LearnerConfig::default(), 0).is_err());
    assert!("sarsa".parse::<AgentKind>().is_err());
}
