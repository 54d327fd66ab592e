use std::f64::consts::PI;

use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::rng::RngStream;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
pub const MAX_VEL_1: f64 = 4.0 * PI;
pub const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

/// Joint angles and angular velocities; both angles zero is hanging down.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AcrobotState {
    pub theta1: f64,
    pub theta2: f64,
    pub dtheta1: f64,
    pub dtheta2: f64,
}

impl AcrobotState {
    pub fn observation(self) -> Vec<f64> {
        let (s1, c1) = self.theta1.sin_cos();
        let (s2, c2) = self.theta2.sin_cos();
        vec![c1, s1, c2, s2, self.dtheta1, self.dtheta2]
    }

    /// Height of the free end above the pivot, in link lengths.
    pub fn tip_height(self) -> f64 {
        -self.theta1.cos() - (self.theta1 + self.theta2).cos()
    }

    fn to_array(self) -> [f64; 4] {
        [self.theta1, self.theta2, self.dtheta1, self.dtheta2]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            theta1: a[0],
            theta2: a[1],
            dtheta1: a[2],
            dtheta2: a[3],
        }
    }
}

/// Time derivative of the two-link pendulum with torque on the second joint.
fn derivative(s: [f64; 4], torque: f64) -> [f64; 4] {
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let (m1, m2, l1, lc1, lc2) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let (sin2, cos2) = theta2.sin_cos();
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2;
    // cos(a - pi/2) written as sin(a) so the hanging state is an exact fixed point
    let phi2 = m2 * lc2 * GRAVITY * (theta1 + theta2).sin();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * sin2
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
        + (m1 * lc1 + m2 * l1) * GRAVITY * theta1.sin()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * sin2 - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn wrap_angle(mut x: f64) -> f64 {
    while x > PI {
        x -= 2.0 * PI;
    }
    while x < -PI {
        x += 2.0 * PI;
    }
    x
}

/// One classic RK4 step of `dt = 0.2 s`, then angle wrapping and velocity
/// clamping.
pub fn acrobot_dynamics(state: AcrobotState, torque: f64) -> AcrobotState {
    let y = state.to_array();
    let axpy = |a: [f64; 4], h: f64, k: [f64; 4]| -> [f64; 4] { std::array::from_fn(|i| a[i] + h * k[i]) };
    let k1 = derivative(y, torque);
    let k2 = derivative(axpy(y, DT / 2.0, k1), torque);
    let k3 = derivative(axpy(y, DT / 2.0, k2), torque);
    let k4 = derivative(axpy(y, DT, k3), torque);
    let next: [f64; 4] = std::array::from_fn(|i| y[i] + DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    AcrobotState {
        theta1: wrap_angle(next[0]),
        theta2: wrap_angle(next[1]),
        dtheta1: next[2].clamp(-MAX_VEL_1, MAX_VEL_1),
        dtheta2: next[3].clamp(-MAX_VEL_2, MAX_VEL_2),
    }
}

/// Swing-up task. Actions map to torques `{-1, 0, +1}`; each step costs -1
/// until the tip rises more than one link length above the pivot.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
    state: AcrobotState,
    clock: EpisodeClock,
}

impl Acrobot {
    pub fn new(max_steps: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: "acrobot",
                observation_dim: 6,
                action_count: 3,
                max_steps,
            },
            state: AcrobotState::default(),
            clock: EpisodeClock::default(),
        }
    }

    pub fn state(&self) -> AcrobotState {
        self.state
    }

    pub fn reset_to(&mut self, state: AcrobotState) -> Vec<f64> {
        self.state = state;
        self.clock.reset();
        state.observation()
    }

    pub fn steps(&self) -> usize {
        self.clock.steps()
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Vec<f64> {
        let mut draw = || rng.uniform_range(-0.1, 0.1);
        let state = AcrobotState::from_array([draw(), draw(), draw(), draw()]);
        self.reset_to(state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        self.clock.begin_step(action, &self.spec)?;
        self.state = acrobot_dynamics(self.state, TORQUES[action]);
        let terminal = self.state.tip_height() > 1.0;
        let truncated = self.clock.end_step(terminal, self.spec.max_steps);
        Ok(StepResult {
            observation: self.state.observation(),
            reward: if terminal { 0.0 } else { -1.0 },
            terminal,
            truncated,
        })
    }
}
