//! Aggregate statistics over trials.

use serde::{Deserialize, Serialize};

use super::run::{EpisodeRecord, TrialFailure};
use super::ExperimentConfig;
use crate::agent::AgentKind;
use crate::envs::EnvKind;

/// `true` when the mean reward over the final `window` episodes is strictly
/// below `threshold`. `None` when there are fewer than `window` episodes.
pub fn detect_collapse(rewards: &[f64], window: usize, threshold: f64) -> Option<bool> {
    final_mean(rewards, window).map(|m| m < threshold)
}

/// Mean of the last `window` values, `None` when too few.
pub fn final_mean(values: &[f64], window: usize) -> Option<f64> {
    if window == 0 || values.len() < window {
        return None;
    }
    Some(values[values.len() - window..].iter().sum::<f64>() / window as f64)
}

/// Mean of the `Some` values among `records[range]`.
pub fn mean_of<F>(records: &[EpisodeRecord], range: std::ops::Range<usize>, field: F) -> Option<f64>
where
    F: Fn(&EpisodeRecord) -> Option<f64>,
{
    let end = range.end.min(records.len());
    let start = range.start.min(end);
    let vals: Vec<f64> = records[start..end].iter().filter_map(field).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Early and late means of the epistemic term in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayStats {
    pub trial: usize,
    /// Mean over the first tenth of the episodes.
    pub early: Option<f64>,
    /// Mean over the last tenth of the episodes.
    pub late: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub episodes: usize,
    /// Indices of the completed trials, in order.
    pub trials: Vec<usize>,
    /// Per-episode mean reward across completed trials.
    pub mean_reward: Vec<f64>,
    /// Per-episode population standard deviation across completed trials.
    pub std_reward: Vec<f64>,
    pub n_trials: Vec<usize>,
    pub final_window: usize,
    /// Final-window mean reward of each completed trial.
    pub trial_final_means: Vec<f64>,
    pub collapse_threshold: f64,
    pub collapsed: Vec<bool>,
    pub epistemic: Vec<DecayStats>,
    pub failures: Vec<TrialFailure>,
}

impl RunSummary {
    pub fn compute(config: &ExperimentConfig, trials: &[(usize, Vec<EpisodeRecord>)], failures: Vec<TrialFailure>) -> Self {
        let episodes = config.episodes;
        let mut mean_reward = Vec::with_capacity(episodes);
        let mut std_reward = Vec::with_capacity(episodes);
        let mut n_trials = Vec::with_capacity(episodes);
        for e in 0..episodes {
            let vals: Vec<f64> = trials
                .iter()
                .filter_map(|(_, r)| r.get(e).map(|x| x.total_reward))
                .collect();
            let n = vals.len();
            let (m, s) = if n == 0 {
                (0.0, 0.0)
            } else {
                let m = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
                (m, var.sqrt())
            };
            mean_reward.push(m);
            std_reward.push(s);
            n_trials.push(n);
        }

        let window = config.collapse_window.min(episodes);
        let threshold = config.effective_collapse_threshold();
        let mut trial_final_means = Vec::new();
        let mut collapsed = Vec::new();
        let mut epistemic = Vec::new();
        for (k, records) in trials {
            let rewards: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
            let w = window.min(rewards.len()).max(1);
            let fm = final_mean(&rewards, w).unwrap_or(0.0);
            trial_final_means.push(fm);
            collapsed.push(detect_collapse(&rewards, w, threshold).unwrap_or(true));
            let tenth = (records.len() / 10).max(1);
            epistemic.push(DecayStats {
                trial: *k,
                early: mean_of(records, 0..tenth, |r| r.epistemic),
                late: mean_of(records, records.len() - tenth..records.len(), |r| r.epistemic),
            });
        }

        Self {
            env: config.env,
            agent: config.agent,
            episodes,
            trials: trials.iter().map(|(k, _)| *k).collect(),
            mean_reward,
            std_reward,
            n_trials,
            final_window: window,
            trial_final_means,
            collapse_threshold: threshold,
            collapsed,
            epistemic,
            failures,
        }
    }

    pub fn collapse_count(&self) -> usize {
        self.collapsed.iter().filter(|c| **c).count()
    }

    /// Final-window mean of the mean-reward curve.
    pub fn final_mean_reward(&self) -> f64 {
        final_mean(&self.mean_reward, self.final_window.max(1)).unwrap_or(0.0)
    }
}
