//! Deep active inference agents trained by gradient descent on the
//! variational free energy, with Q-learning and actor-critic baselines,
//! native CartPole and Acrobot environments, and a seeded multi-trial
//! experiment harness.

pub mod math;
pub mod rng;
pub mod agent;
pub mod envs;
pub mod replay;
pub mod harness;
pub mod selfcheck;
