use approx::assert_abs_diff_eq;
use deep_aif::envs::{
    acrobot_dynamics, cartpole_dynamics, make_env, Acrobot, AcrobotState, CartPole, CartPoleState, EnvKind, EnvOptions,
    Environment,
};
use deep_aif::rng::RngStream;
use proptest::prelude::*;

fn rollout(kind: EnvKind, seed: u64, actions: &[usize]) -> Vec<Vec<f64>> {
    let mut env = make_env(kind, EnvOptions::default());
    let mut rng = RngStream::new(seed, 1);
    let mut obs = vec![env.reset(&mut rng)];
    for &a in actions {
        let step = env.step(a).unwrap();
        obs.push(step.observation.clone());
        if step.done() {
            obs.push(env.reset(&mut rng));
        }
    }
    obs
}

#[test]
fn cartpole_one_push_from_rest() {
    let s = cartpole_dynamics(CartPoleState::default(), 10.0);
    let expected = [0.0, 0.195122, 0.0, -0.292683];
    for (got, want) in s.to_vec().iter().zip(expected) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
    }
}

#[test]
fn cartpole_reference_values_to_1e9() {
    // theta_acc = (g sin - cos temp) / (l (4/3 - m cos^2 / M)), temp = F / M
    let temp = 10.0 / 1.1;
    let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
    let x_acc = temp - 0.05 * theta_acc / 1.1;
    let s = cartpole_dynamics(CartPoleState::default(), 10.0);
    assert_abs_diff_eq!(s.x_dot, 0.02 * x_acc, epsilon = 1e-12);
    assert_abs_diff_eq!(s.theta_dot, 0.02 * theta_acc, epsilon = 1e-12);
    assert_abs_diff_eq!(s.x_dot, 0.195122, epsilon = 1e-6);
    assert_abs_diff_eq!(s.theta_dot, -0.292683, epsilon = 1e-6);
}

#[test]
fn acrobot_rest_is_fixed_and_torques_mirror() {
    let rest = AcrobotState::default();
    assert_eq!(acrobot_dynamics(rest, 0.0), rest);
    let (mut plus, mut minus) = (rest, rest);
    for _ in 0..100 {
        plus = acrobot_dynamics(plus, 1.0);
        minus = acrobot_dynamics(minus, -1.0);
        assert_eq!(plus.theta1, -minus.theta1);
        assert_eq!(plus.theta2, -minus.theta2);
        assert_eq!(plus.dtheta1, -minus.dtheta1);
        assert_eq!(plus.dtheta2, -minus.dtheta2);
    }
    assert!(acrobot_dynamics(rest, 1.0).dtheta2 > 0.0);
}

/// Action sequence `(7k + k/3) mod 2` from a fixed state, recorded from the
/// gymnasium `CartPole-v1` reference: states after steps 1 and 13, with the
/// pole first past 12 degrees on step 13.
#[test]
fn cartpole_matches_reference_trajectory() {
    let mut env = CartPole::new(500, 12.0);
    env.reset_to(CartPoleState {
        x: 0.01,
        x_dot: -0.02,
        theta: 0.03,
        theta_dot: 0.015,
    });
    let reference = [
        (1, [0.009600000000000001, -0.21553905733800666, 0.0303, 0.31699528410170835]),
        (13, [-0.09775848194374906, -1.008627518547671, 0.21136726537953773, 1.7994433093086653]),
    ];
    let mut terminal_at = None;
    let mut states = Vec::new();
    for k in 0..13usize {
        let step = env.step((k * 7 + k / 3) % 2).unwrap();
        states.push(env.state().to_vec());
        if step.terminal && terminal_at.is_none() {
            terminal_at = Some(k + 1);
        }
    }
    assert_eq!(terminal_at, Some(13));
    for (step, want) in reference {
        for (got, want) in states[step - 1].iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }
}

/// States after 1, 10 and 60 steps of the action sequence `(7k + k/3) mod 3`,
/// recorded from the gymnasium `Acrobot-v1` reference implementation.
#[test]
fn acrobot_matches_reference_trajectory() {
    let reference = [
        (1, [0.06048772467820533, -0.05453998509397796, 0.08185570403465979, -0.24927319984543655]),
        (10, [0.0724216120889615, -0.15815420783577339, 0.47147717755053764, -0.997143326106712]),
        (60, [-0.09800688057181219, 0.12668123579498283, -0.4399193797392573, 0.7895190983308015]),
    ];
    let mut env = Acrobot::new(500);
    env.reset_to(AcrobotState {
        theta1: 0.05,
        theta2: -0.03,
        dtheta1: 0.02,
        dtheta2: 0.01,
    });
    let mut states = Vec::new();
    for k in 0..60usize {
        env.step((k * 7 + k / 3) % 3).unwrap();
        states.push(env.state());
    }
    for (step, want) in reference {
        let s = states[step - 1];
        for (got, want) in [s.theta1, s.theta2, s.dtheta1, s.dtheta2].iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }
}

#[test]
fn rollouts_are_deterministic() {
    let mut rng = RngStream::new(99, 0);
    for (kind, n) in [(EnvKind::Cartpole, 2), (EnvKind::Acrobot, 3)] {
        let actions: Vec<usize> = (0..2000).map(|_| rng.below(n)).collect();
        assert_eq!(rollout(kind, 5, &actions), rollout(kind, 5, &actions));
        assert_ne!(rollout(kind, 5, &actions), rollout(kind, 6, &actions));
    }
}

#[test]
fn reset_ranges() {
    let mut env = CartPole::new(500, 12.0);
    let mut rng = RngStream::new(1, 1);
    for _ in 0..1000 {
        assert!(env.reset(&mut rng).iter().all(|v| v.abs() <= 0.05));
    }
    let mut env = Acrobot::new(500);
    for _ in 0..1000 {
        let o = env.reset(&mut rng);
        assert!((0.995..=1.0).contains(&o[0]) && (0.995..=1.0).contains(&o[2]));
        assert!(o[4].abs() <= 0.1 && o[5].abs() <= 0.1);
    }
}

#[test]
fn random_cartpole_policy_scores_low() {
    let mut env = make_env(EnvKind::Cartpole, EnvOptions::default());
    let mut rng = RngStream::new(7, 1);
    let mut act = RngStream::new(7, 2);
    let mut total = 0.0;
    for _ in 0..100 {
        env.reset(&mut rng);
        loop {
            let s = env.step(act.below(2)).unwrap();
            total += s.reward;
            if s.done() {
                break;
            }
        }
    }
    assert!(total / 100.0 < 50.0);
}

#[test]
fn specs() {
    let c = make_env(EnvKind::Cartpole, EnvOptions::default());
    assert_eq!((c.spec().observation_dim, c.spec().action_count), (4, 2));
    let a = make_env(EnvKind::Acrobot, EnvOptions::default());
    assert_eq!((a.spec().observation_dim, a.spec().action_count), (6, 3));
    assert_eq!("cartpole".parse::<EnvKind>().unwrap(), EnvKind::Cartpole);
    assert!("lunarlander".parse::<EnvKind>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Adversarial action sequences never produce non-finite observations, and
    /// returns stay within the environment's bounds.
    #[test]
    fn observations_stay_finite(kind in prop_oneof![Just(EnvKind::Cartpole), Just(EnvKind::Acrobot)],
                                actions in prop::collection::vec(0usize..3, 500),
                                seed in 0u64..1000) {
        let mut env = make_env(kind, EnvOptions::default());
        let n = env.spec().action_count;
        let (lo, hi) = env.spec().return_bounds();
        let mut rng = RngStream::new(seed, 1);
        env.reset(&mut rng);
        let mut ret = 0.0;
        for a in actions {
            let s = env.step(a % n).unwrap();
            prop_assert!(s.observation.iter().all(|v| v.is_finite()));
            ret += s.reward;
            if s.done() {
                prop_assert!(ret >= lo && ret <= hi);
                env.reset(&mut rng);
                ret = 0.0;
            }
        }
    }

    #[test]
    fn cartpole_dynamics_are_odd(x in -2.0..2.0f64, xd in -2.0..2.0f64, t in -0.2..0.2f64, td in -2.0..2.0f64) {
        let s = CartPoleState { x, x_dot: xd, theta: t, theta_dot: td };
        let m = CartPoleState { x: -x, x_dot: -xd, theta: -t, theta_dot: -td };
        let a = cartpole_dynamics(s, 10.0).to_vec();
        let b = cartpole_dynamics(m, -10.0).to_vec();
        for (u, v) in a.iter().zip(&b) {
            prop_assert_eq!(*u, -*v);
        }
    }
}
