//! Self-tests run by `aif check`: finite-difference gradient checks of every
//! loss on random fixtures and a handful of closed-form oracles.

use std::fmt;

use crate::agent::losses::{actor_objective, policy_divergence, transition_nll, value_regression};
use crate::agent::{one_hot_rows, AcAgent, AifAgent, AifConfig, LearnerConfig, QAgent};
use crate::envs::{acrobot_dynamics, cartpole_dynamics, AcrobotState, CartPoleState};
use ndarray::{Array2, ArrayView2};

use crate::math::{diag_gaussian_kl, gradient_check, softmax_rows, softmax_with_log, DiagGaussian, Mlp};
use crate::replay::{Batch, Transition};
use crate::rng::{RngStream, StreamKind};

/// Largest accepted relative error between analytic and numeric gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Random fixtures per loss.
pub const FIXTURES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// A small random problem: dimensions, a batch and agent settings.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub seed: u64,
    pub observation_dim: usize,
    pub action_count: usize,
    pub batch: Batch,
    pub config: AifConfig,
    pub learner: LearnerConfig,
}

impl Fixture {
    pub fn random(seed: u64) -> Self {
        let mut rng = RngStream::for_kind(seed, StreamKind::Aux(7));
        let observation_dim = 2 + rng.below(3);
        let action_count = 2 + rng.below(2);
        let n = 4 + rng.below(5);
        let vec = |rng: &mut RngStream| (0..observation_dim).map(|_| rng.uniform_range(-1.5, 1.5)).collect::<Vec<_>>();
        let items: Vec<Transition> = (0..n)
            .map(|_| Transition {
                state: vec(&mut rng),
                action: rng.below(action_count),
                reward: rng.uniform_range(-1.0, 1.0),
                next_state: vec(&mut rng),
                terminal: rng.uniform() < 0.3,
                truncated: false,
            })
            .collect();
        let refs: Vec<&Transition> = items.iter().collect();
        let config = AifConfig {
            hidden_units: 6 + rng.below(6),
            gamma_precision: rng.uniform_range(0.3, 3.0),
            ..AifConfig::default()
        };
        Self {
            seed,
            observation_dim,
            action_count,
            batch: Batch::from_transitions(&refs),
            config,
            learner: LearnerConfig::default(),
        }
    }

    pub fn aif(&self) -> AifAgent {
        AifAgent::new(self.observation_dim, self.action_count, self.config, self.learner, self.seed).expect("valid fixture")
    }
}

/// Minimum distance of every relu pre-activation from zero. Central
/// differences straddling a kink measure a one-sided slope, not a bug.
pub const KINK_MARGIN: f64 = 1e-3;

fn worst<F>(f: F, net: &Mlp, inputs: ArrayView2<f64>, seed: u64) -> f64
where
    F: Fn(&Mlp) -> (f64, crate::math::MlpGrads),
{
    let mut rng = RngStream::for_kind(seed, StreamKind::Aux(8));
    // Freshly initialized biases are zero, so a sample whose previous layer
    // is fully inactive sits exactly on a kink. Redraw the biases until the
    // batch keeps clear of every kink.
    let mut net = net.clone();
    loop {
        for layer in net.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.uniform_range(-0.1, 0.1));
        }
        let (_, cache) = net.forward_batch(inputs).expect("fixture");
        if cache.relu_margin(&net) > KINK_MARGIN {
            break;
        }
    }
    gradient_check(f, &net, net.param_count(), &mut rng)
}

/// Largest relative gradient error of each loss over `fixtures` seeds.
pub fn gradient_errors(fixtures: usize) -> Vec<(&'static str, f64)> {
    let mut errs = [
        ("transition NLL", 0.0f64),
        ("EFE regression", 0.0),
        ("policy divergence (with entropy)", 0.0),
        ("policy divergence (without entropy)", 0.0),
        ("Q-learning regression", 0.0),
        ("critic regression", 0.0),
        ("actor objective", 0.0),
    ];
    for seed in 0..fixtures as u64 {
        let fx = Fixture::random(seed);
        let b = &fx.batch;
        let aif = fx.aif();

        let inputs = one_hot_rows(b.states.view(), &b.actions, fx.action_count);
        let e = worst(
            |n| {
                let t = transition_nll(n, inputs.view(), b.next_states.view()).expect("fixture");
                (t.loss, t.grads)
            },
            aif.transition_net(),
            inputs.view(),
            seed,
        );
        errs[0].1 = errs[0].1.max(e);

        let targets = aif.efe_targets(b).expect("fixture").targets;
        let e = worst(
            |n| value_regression(n, b.states.view(), &b.actions, &targets).expect("fixture"),
            aif.efe_net(),
            b.states.view(),
            seed,
        );
        errs[1].1 = errs[1].1.max(e);

        // A freshly initialized EFE network gives a nearly flat prior and
        // hence vanishing policy gradients; draw an informative one instead.
        let mut prior_rng = RngStream::for_kind(seed, StreamKind::Aux(9));
        let g = Array2::from_shape_simple_fn((b.len(), fx.action_count), || prior_rng.uniform_range(-2.0, 2.0));
        let (_, prior) = softmax_rows((g * -fx.config.gamma_precision).view()).expect("finite");
        for (slot, with_entropy) in [(2, true), (3, false)] {
            let e = worst(
                |n| {
                    let p = policy_divergence(n, b.states.view(), prior.view(), with_entropy).expect("fixture");
                    (p.loss, p.grads)
                },
                aif.policy_net(),
                b.states.view(),
                seed,
            );
            errs[slot].1 = errs[slot].1.max(e);
        }

        let q = QAgent::new(fx.observation_dim, fx.action_count, fx.config, fx.learner, fx.config.gamma_precision, seed)
            .expect("fixture");
        let qt = q.q_targets(b).expect("fixture");
        let e = worst(|n| value_regression(n, b.states.view(), &b.actions, &qt).expect("fixture"), q.q_net(), b.states.view(), seed);
        errs[4].1 = errs[4].1.max(e);

        let ac = AcAgent::new(fx.observation_dim, fx.action_count, fx.config, fx.learner, seed).expect("fixture");
        let ct = ac.critic_targets(b).expect("fixture");
        let e = worst(|n| value_regression(n, b.states.view(), &b.actions, &ct).expect("fixture"), ac.value_net(), b.states.view(), seed);
        errs[5].1 = errs[5].1.max(e);
        let adv = ac.advantages(b).expect("fixture");
        let e = worst(
            |n| {
                let p = actor_objective(n, b.states.view(), &b.actions, &adv).expect("fixture");
                (p.loss, p.grads)
            },
            ac.policy_net(),
            b.states.view(),
            seed,
        );
        errs[6].1 = errs[6].1.max(e);
    }
    errs.to_vec()
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = gradient_errors(FIXTURES)
        .into_iter()
        .map(|(name, e)| {
            check(
                &format!("gradient {name}"),
                e <= GRADIENT_TOLERANCE,
                format!("max relative error {e:.2e} over {FIXTURES} fixtures"),
            )
        })
        .collect();

    let (p, _) = softmax_with_log(&[1.0, 2.0, 3.0]).expect("finite");
    let (p_shift, _) = softmax_with_log(&[101.0, 102.0, 103.0]).expect("finite");
    let shift = p.iter().zip(&p_shift).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sum = p.iter().sum::<f64>();
    out.push(check(
        "softmax",
        (sum - 1.0).abs() < 1e-12 && shift < 1e-12,
        format!("sum {sum}, shift difference {shift:.1e}"),
    ));

    let a = DiagGaussian::new(vec![0.0], vec![0.0]).expect("valid");
    let b = DiagGaussian::new(vec![1.0], vec![0.0]).expect("valid");
    let kl = diag_gaussian_kl(&a, &b).expect("valid");
    out.push(check("gaussian KL", (kl - 0.5).abs() < 1e-12, format!("KL(N(0,1)||N(1,1)) = {kl}")));

    let s = cartpole_dynamics(CartPoleState::default(), 10.0);
    let expect = [0.0, 0.195122, 0.0, -0.292683];
    let dev = s.to_vec().iter().zip(expect).map(|(x, e)| (x - e).abs()).fold(0.0, f64::max);
    out.push(check("cartpole step", dev < 1e-6, format!("max deviation {dev:.1e}")));

    let rest = AcrobotState::default();
    let next = acrobot_dynamics(rest, 0.0);
    out.push(check("acrobot rest", next == rest, format!("{next:?}")));
    out
}
