//! The action-perception loop and the trial/experiment drivers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::summary::RunSummary;
use super::{ExperimentConfig, HarnessError};
use crate::agent::{build_agent, Agent, LearnTelemetry};
use crate::envs::{make_env, Environment};
use crate::math::categorical_entropy;
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{RngStream, StreamKind};

/// Per-episode telemetry. Loss means are taken over the learning steps of
/// the episode and are `None` when no step learned or the agent has no such
/// term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub episode: usize,
    pub total_reward: f64,
    pub length: usize,
    pub terminal: bool,
    pub learn_steps: usize,
    pub transition_loss: Option<f64>,
    pub transition_mse: Option<f64>,
    /// EFE regression loss for the active inference agent, critic loss for
    /// the baselines.
    pub value_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub policy_entropy: f64,
    pub epistemic: Option<f64>,
}

/// Independent random streams of one trial.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    pub env: RngStream,
    pub action: RngStream,
    pub replay: RngStream,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: RngStream::for_kind(seed, StreamKind::Environment),
            action: RngStream::for_kind(seed, StreamKind::Action),
            replay: RngStream::for_kind(seed, StreamKind::Replay),
        }
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.count += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Runs one episode: select action, step, store, learn, until the episode
/// terminates or is truncated.
pub fn run_episode(
    agent: &mut dyn Agent,
    env: &mut dyn Environment,
    buffer: &mut ReplayBuffer,
    streams: &mut TrialStreams,
    trial: usize,
    episode: usize,
) -> Result<EpisodeRecord, HarnessError> {
    let agent_err = |source| HarnessError::Agent { trial, episode, source };
    let mut state = env.reset(&mut streams.env);
    let mut total_reward = 0.0;
    let mut length = 0;
    let mut learn_steps = 0;
    let (mut tl, mut mse, mut vl, mut pl, mut ent, mut eps) =
        (Mean::default(), Mean::default(), Mean::default(), Mean::default(), Mean::default(), Mean::default());
    loop {
        let choice = agent.select_action(&state, &mut streams.action).map_err(agent_err)?;
        ent.add(Some(categorical_entropy(&choice.probs).map_err(|e| agent_err(e.into()))?));
        let step = env
            .step(choice.action)
            .map_err(|source| HarnessError::Env { trial, episode, source })?;
        total_reward += step.reward;
        length += 1;
        buffer.push(Transition {
            state: std::mem::take(&mut state),
            action: choice.action,
            reward: step.reward,
            next_state: step.observation.clone(),
            terminal: step.terminal,
            truncated: step.truncated,
        });
        let t: LearnTelemetry = agent.learn_step(buffer, &mut streams.replay).map_err(agent_err)?;
        if !t.skipped {
            learn_steps += 1;
            tl.add(t.transition_loss);
            mse.add(t.transition_mse);
            vl.add(t.value_loss);
            pl.add(t.policy_loss);
            eps.add(t.epistemic);
        }
        let done = step.done();
        state = step.observation;
        if done {
            return Ok(EpisodeRecord {
                trial,
                episode,
                total_reward,
                length,
                terminal: step.terminal,
                learn_steps,
                transition_loss: tl.get(),
                transition_mse: mse.get(),
                value_loss: vl.get(),
                policy_loss: pl.get(),
                policy_entropy: ent.get().unwrap_or(0.0),
                epistemic: eps.get(),
            });
        }
    }
}

/// Where a trial streams its records and checkpoint.
pub fn trial_log_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join("trials").join(format!("trial_{trial:03}.jsonl"))
}

pub fn trial_checkpoint_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join("trials").join(format!("trial_{trial:03}.checkpoint.json"))
}

/// Runs one seeded trial from scratch. With `log_dir`, each record is
/// appended to the trial's JSONL file as soon as its episode ends.
pub fn run_trial(config: &ExperimentConfig, trial: usize, log_dir: Option<&Path>) -> Result<Vec<EpisodeRecord>, HarnessError> {
    config.validate()?;
    let seed = config.trial_seed(trial);
    let mut env = make_env(config.env, config.env_options());
    let spec = env.spec().clone();
    let mut agent = build_agent(
        config.agent,
        spec.observation_dim,
        spec.action_count,
        config.agent_config(),
        config.learner_config(),
        config.boltzmann_beta,
        seed,
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let mut streams = TrialStreams::new(seed);

    let mut sink = match log_dir {
        Some(dir) => {
            let path = trial_log_path(dir, trial);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
            }
            let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            Some((path, BufWriter::new(file)))
        }
        None => None,
    };

    let mut records = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let record = run_episode(agent.as_mut(), env.as_mut(), &mut buffer, &mut streams, trial, episode)?;
        if let Some((path, w)) = sink.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| HarnessError::io(path.as_path(), e))?;
        }
        if config.log_every > 0 && (episode + 1) % config.log_every == 0 {
            let from = records.len().saturating_sub(config.log_every.min(100) - 1);
            let recent: Vec<f64> = records[from..]
                .iter()
                .map(|r: &EpisodeRecord| r.total_reward)
                .chain(std::iter::once(record.total_reward))
                .collect();
            eprintln!(
                "trial {trial} episode {} reward {} recent mean {:.1}",
                episode + 1,
                record.total_reward,
                recent.iter().sum::<f64>() / recent.len() as f64
            );
        }
        records.push(record);
    }
    if config.save_checkpoints {
        if let Some(dir) = log_dir {
            super::checkpoint::write_checkpoint(agent.as_ref(), &trial_checkpoint_path(dir, trial))?;
        }
    }
    Ok(records)
}

/// A trial that stopped early. Other trials are unaffected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

/// How trials are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Trials on the rayon pool; falls back to sequential without the
    /// `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Records of completed trials, ordered by trial index.
    pub trials: Vec<(usize, Vec<EpisodeRecord>)>,
    pub failures: Vec<TrialFailure>,
    pub summary: RunSummary,
}

fn isolated_trial(config: &ExperimentConfig, trial: usize, log_dir: Option<&Path>) -> Result<Vec<EpisodeRecord>, TrialFailure> {
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| run_trial(config, trial, log_dir)));
    let message = match outcome {
        Ok(Ok(records)) => return Ok(records),
        Ok(Err(e)) => e.to_string(),
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            format!("panic: {what}")
        }
    };
    Err(TrialFailure {
        trial,
        seed: config.trial_seed(trial),
        message,
    })
}

/// Runs every trial and summarizes the completed ones. A failing trial is
/// reported in the summary; its partial log is left on disk.
pub fn run_experiment(
    config: &ExperimentConfig,
    execution: Execution,
    log_dir: Option<&Path>,
) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let outcomes: Vec<Result<Vec<EpisodeRecord>, TrialFailure>> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..config.trials)
                .into_par_iter()
                .map(|k| isolated_trial(config, k, log_dir))
                .collect()
        }
        _ => (0..config.trials).map(|k| isolated_trial(config, k, log_dir)).collect(),
    };
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(records) => trials.push((k, records)),
            Err(f) => failures.push(f),
        }
    }
    let summary = RunSummary::compute(config, &trials, failures.clone());
    Ok(ExperimentResult {
        trials,
        failures,
        summary,
    })
}
