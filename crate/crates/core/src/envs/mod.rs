//! Classic-control environments behind one interface.

mod acrobot;
mod cartpole;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use acrobot::{acrobot_dynamics, Acrobot, AcrobotState};
pub use cartpole::{cartpole_dynamics, CartPole, CartPoleState};

use crate::rng::RngStream;

/// Default step cap for both environments.
pub const DEFAULT_MAX_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub observation_dim: usize,
    pub action_count: usize,
    pub max_steps: usize,
}

impl EnvSpec {
    /// Inclusive bounds on the undiscounted episode return.
    pub fn return_bounds(&self) -> (f64, f64) {
        match self.name {
            "cartpole" => (1.0, self.max_steps as f64),
            _ => (-(self.max_steps as f64), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode ended inside the environment (pole fell, arm swung up).
    pub terminal: bool,
    /// The step cap was reached without termination.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("unknown environment '{0}' (expected cartpole or acrobot)")]
    UnknownName(String),
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, rng: &mut RngStream) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Cartpole,
    Acrobot,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Cartpole => "cartpole",
            EnvKind::Acrobot => "acrobot",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cartpole" => Ok(EnvKind::Cartpole),
            "acrobot" => Ok(EnvKind::Acrobot),
            other => Err(EnvError::UnknownName(other.to_string())),
        }
    }
}

/// Tunables shared by the environment constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    pub max_steps: usize,
    pub angle_limit_deg: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            angle_limit_deg: cartpole::DEFAULT_ANGLE_LIMIT_DEG,
        }
    }
}

pub fn make_env(kind: EnvKind, options: EnvOptions) -> Box<dyn Environment> {
    match kind {
        EnvKind::Cartpole => Box::new(CartPole::new(options.max_steps, options.angle_limit_deg)),
        EnvKind::Acrobot => Box::new(Acrobot::new(options.max_steps)),
    }
}

/// Step bookkeeping shared by both environments.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    steps: usize,
    started: bool,
    finished: bool,
}

impl EpisodeClock {
    pub(crate) fn reset(&mut self) {
        *self = Self {
            started: true,
            ..Self::default()
        };
    }

    pub(crate) fn begin_step(&self, action: usize, spec: &EnvSpec) -> Result<(), EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        if action >= spec.action_count {
            return Err(EnvError::InvalidAction {
                action,
                count: spec.action_count,
            });
        }
        Ok(())
    }

    /// Advances the counter; returns whether the step cap was hit.
    pub(crate) fn end_step(&mut self, terminal: bool, max_steps: usize) -> bool {
        self.steps += 1;
        let truncated = !terminal && self.steps >= max_steps;
        self.finished = terminal || truncated;
        truncated
    }

    pub(crate) fn steps(&self) -> usize {
        self.steps
    }
}
