//! Agent checkpoints as self-describing JSON: every layer lists its shape
//! and row-major values, floats are written at full round-trip precision.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::{agent_from_parts, Agent, AgentKind, AgentParts, AifConfig, LearnerConfig, NamedNetwork, NamedTarget};
use crate::math::{Activation, AdamConfig, AdamState, Layer, LayerGrads, Mlp, MlpGrads};
use crate::replay::TargetSnapshot;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    /// `[out, in]`.
    shape: [usize; 2],
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentDoc {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerDoc {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first: Vec<MomentDoc>,
    second: Vec<MomentDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    name: String,
    layers: Vec<LayerDoc>,
    optimizer: OptimizerDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetDoc {
    name: String,
    period: u64,
    steps_since_sync: u64,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    agent: AgentKind,
    observation_dim: usize,
    action_count: usize,
    learn_steps: u64,
    config: AifConfig,
    learner: LearnerConfig,
    boltzmann_beta: f64,
    networks: Vec<NetworkDoc>,
    targets: Vec<TargetDoc>,
}

fn refuse(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

fn layers_doc(net: &Mlp) -> Vec<LayerDoc> {
    net.layers()
        .iter()
        .map(|l| LayerDoc {
            shape: [l.out_dim(), l.in_dim()],
            activation: l.activation,
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        })
        .collect()
}

fn moments_doc(g: &MlpGrads) -> Vec<MomentDoc> {
    g.layers
        .iter()
        .map(|l| MomentDoc {
            shape: [l.weights.nrows(), l.weights.ncols()],
            weights: l.weights.iter().copied().collect(),
            bias: l.bias.to_vec(),
        })
        .collect()
}

fn matrix(shape: [usize; 2], values: Vec<f64>, bias: &[f64], what: &str) -> Result<Array2<f64>, HarnessError> {
    if bias.len() != shape[0] {
        return Err(refuse(format!("{what}: bias has {} values for shape {:?}", bias.len(), shape)));
    }
    Array2::from_shape_vec((shape[0], shape[1]), values)
        .map_err(|_| refuse(format!("{what}: value count does not match shape {:?}", shape)))
}

fn mlp_from(doc: Vec<LayerDoc>, what: &str) -> Result<Mlp, HarnessError> {
    let layers = doc
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            let weights = matrix(l.shape, l.weights, &l.bias, &format!("{what} layer {k}"))?;
            Ok(Layer {
                weights,
                bias: Array1::from(l.bias),
                activation: l.activation,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Mlp::new(layers).map_err(|e| refuse(format!("{what}: {e}")))
}

fn moments_from(doc: Vec<MomentDoc>, what: &str) -> Result<MlpGrads, HarnessError> {
    let layers = doc
        .into_iter()
        .enumerate()
        .map(|(k, m)| {
            let weights = matrix(m.shape, m.weights, &m.bias, &format!("{what} moment {k}"))?;
            Ok(LayerGrads {
                weights,
                bias: Array1::from(m.bias),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(MlpGrads { layers })
}

fn to_doc(parts: &AgentParts) -> CheckpointDoc {
    CheckpointDoc {
        format_version: CHECKPOINT_VERSION,
        agent: parts.kind,
        observation_dim: parts.observation_dim,
        action_count: parts.action_count,
        learn_steps: parts.learn_steps,
        config: parts.config,
        learner: parts.learner,
        boltzmann_beta: parts.boltzmann_beta,
        networks: parts
            .networks
            .iter()
            .map(|n| NetworkDoc {
                name: n.name.clone(),
                layers: layers_doc(&n.params),
                optimizer: OptimizerDoc {
                    step: n.optimizer.step,
                    beta1: n.optimizer.config.beta1,
                    beta2: n.optimizer.config.beta2,
                    eps: n.optimizer.config.eps,
                    first: moments_doc(&n.optimizer.first),
                    second: moments_doc(&n.optimizer.second),
                },
            })
            .collect(),
        targets: parts
            .targets
            .iter()
            .map(|t| TargetDoc {
                name: t.name.clone(),
                period: t.snapshot.period(),
                steps_since_sync: t.snapshot.steps_since_sync(),
                layers: layers_doc(t.snapshot.params()),
            })
            .collect(),
    }
}

fn from_doc(doc: CheckpointDoc) -> Result<AgentParts, HarnessError> {
    let networks = doc
        .networks
        .into_iter()
        .map(|n| {
            let params = mlp_from(n.layers, &n.name)?;
            let optimizer = AdamState {
                first: moments_from(n.optimizer.first, &n.name)?,
                second: moments_from(n.optimizer.second, &n.name)?,
                step: n.optimizer.step,
                config: AdamConfig {
                    beta1: n.optimizer.beta1,
                    beta2: n.optimizer.beta2,
                    eps: n.optimizer.eps,
                },
            };
            if !optimizer.matches(&params) {
                return Err(refuse(format!("{}: optimizer shapes differ from the network", n.name)));
            }
            Ok(NamedNetwork {
                name: n.name,
                params,
                optimizer,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let targets = doc
        .targets
        .into_iter()
        .map(|t| {
            if t.period == 0 {
                return Err(refuse(format!("target {}: zero sync period", t.name)));
            }
            let params = mlp_from(t.layers, &t.name)?;
            Ok(NamedTarget {
                name: t.name,
                snapshot: TargetSnapshot::from_parts(params, t.period, t.steps_since_sync),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(AgentParts {
        kind: doc.agent,
        observation_dim: doc.observation_dim,
        action_count: doc.action_count,
        learn_steps: doc.learn_steps,
        config: doc.config,
        learner: doc.learner,
        boltzmann_beta: doc.boltzmann_beta,
        networks,
        targets,
    })
}

/// Serializes an agent to checkpoint text.
pub fn save_checkpoint(agent: &dyn Agent) -> String {
    serde_json::to_string_pretty(&to_doc(&agent.to_parts())).expect("checkpoint serializes") + "\n"
}

/// Parses checkpoint text and rebuilds the agent. Refuses unknown format
/// versions and any shape inconsistency.
pub fn load_checkpoint(text: &str) -> Result<Box<dyn Agent>, HarnessError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| refuse(format!("not valid JSON: {e}")))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => {
            return Err(refuse(format!(
                "format version {v} is not supported (expected {CHECKPOINT_VERSION})"
            )))
        }
        None => return Err(refuse("missing format_version")),
    }
    let doc: CheckpointDoc = serde_json::from_value(value).map_err(|e| refuse(e.to_string()))?;
    let parts = from_doc(doc)?;
    agent_from_parts(parts).map_err(|e| refuse(e.to_string()))
}

pub fn write_checkpoint(agent: &dyn Agent, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, save_checkpoint(agent)).map_err(|e| HarnessError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Box<dyn Agent>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    load_checkpoint(&text)
}
