use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::rng::RngStream;

pub const DEFAULT_ANGLE_LIMIT_DEG: f64 = 12.0;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_LIMIT: f64 = 2.4;

/// `(x, x_dot, theta, theta_dot)` in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// One explicit Euler step (tau = 0.02 s) of the cart-pole equations.
pub fn cartpole_dynamics(s: CartPoleState, force: f64) -> CartPoleState {
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * s.theta_dot * s.theta_dot * sin) / TOTAL_MASS;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    CartPoleState {
        x: s.x + TAU * s.x_dot,
        x_dot: s.x_dot + TAU * x_acc,
        theta: s.theta + TAU * s.theta_dot,
        theta_dot: s.theta_dot + TAU * theta_acc,
    }
}

/// Pole balancing. Action 0 pushes left, action 1 pushes right; every step
/// pays +1 and the episode ends once the pole or the cart leaves its limits.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    angle_limit_rad: f64,
    state: CartPoleState,
    clock: EpisodeClock,
}

impl CartPole {
    pub fn new(max_steps: usize, angle_limit_deg: f64) -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole",
                observation_dim: 4,
                action_count: 2,
                max_steps,
            },
            angle_limit_rad: angle_limit_deg.to_radians(),
            state: CartPoleState::default(),
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Places the environment in an explicit state and starts a new episode.
    pub fn reset_to(&mut self, state: CartPoleState) -> Vec<f64> {
        self.state = state;
        self.clock.reset();
        state.to_vec()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Vec<f64> {
        let mut draw = || rng.uniform_range(-0.05, 0.05);
        let state = CartPoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.reset_to(state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.begin_step(action, &self.spec)?;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = cartpole_dynamics(self.state, force);
        let s = self.state;
        let terminal = s.x.abs() > X_LIMIT || s.theta.abs() > self.angle_limit_rad;
        let truncated = self.clock.end_step(terminal, self.spec.max_steps);
        Ok(StepResult {
            observation: s.to_vec(),
            reward: 1.0,
            terminal,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_push_from_rest() {
        let next = cartpole_dynamics(CartPoleState::default(), 10.0);
        assert_eq!(next.x, 0.0);
        assert_eq!(next.theta, 0.0);
        assert!((next.x_dot - 0.195_121_951_219_512_2).abs() < 1e-9);
        assert!((next.theta_dot + 0.292_682_926_829_268_3).abs() < 1e-9);
    }

    #[test]
    fn zero_force_equilibrium() {
        assert_eq!(cartpole_dynamics(CartPoleState::default(), 0.0), CartPoleState::default());
    }

    #[test]
    fn dynamics_are_odd() {
        let s = CartPoleState {
            x: 0.3,
            x_dot: -0.7,
            theta: 0.05,
            theta_dot: 0.4,
        };
        let m = CartPoleState {
            x: -s.x,
            x_dot: -s.x_dot,
            theta: -s.theta,
            theta_dot: -s.theta_dot,
        };
        let a = cartpole_dynamics(s, 10.0);
        let b = cartpole_dynamics(m, -10.0);
        assert_eq!((a.x, a.x_dot, a.theta, a.theta_dot), (-b.x, -b.x_dot, -b.theta, -b.theta_dot));
    }

    #[test]
    fn constant_push_topples_the_pole() {
        let mut env = CartPole::new(500, DEFAULT_ANGLE_LIMIT_DEG);
        env.reset_to(CartPoleState::default());
        let mut steps = 0;
        loop {
            let r = env.step(1).unwrap();
            steps += 1;
            assert_eq!(r.reward, 1.0);
            if r.done() {
                assert!(r.terminal);
                break;
            }
        }
        assert!(steps < 25, "{steps}");
    }

    #[test]
    fn finished_episode_refuses_steps() {
        let mut env = CartPole::new(500, DEFAULT_ANGLE_LIMIT_DEG);
        assert_eq!(env.step(0), Err(EnvError::NotReset));
        env.reset_to(CartPoleState::default());
        while !env.step(1).unwrap().done() {}
        assert_eq!(env.step(0), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn invalid_action() {
        let mut env = CartPole::new(500, DEFAULT_ANGLE_LIMIT_DEG);
        env.reset_to(CartPoleState::default());
        assert!(matches!(env.step(2), Err(EnvError::InvalidAction { .. })));
    }

    #[test]
    fn truncates_at_cap() {
        let mut env = CartPole::new(3, DEFAULT_ANGLE_LIMIT_DEG);
        env.reset_to(CartPoleState::default());
        // alternate pushes keep the pole up for a few steps
        assert!(!env.step(1).unwrap().done());
        assert!(!env.step(0).unwrap().done());
        let last = env.step(1).unwrap();
        assert!(last.truncated && !last.terminal);
    }

    #[test]
    fn wider_angle_limit_survives_longer() {
        let run = |deg| {
            let mut env = CartPole::new(500, deg);
            env.reset_to(CartPoleState::default());
            let mut n = 0;
            while !env.step(1).unwrap().done() {
                n += 1;
            }
            n
        };
        assert!(run(15.0) >= run(12.0));
    }
}
