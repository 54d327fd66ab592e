//! Result files: per-episode JSONL, summary and per-trial CSVs, the run
//! manifest, and readers that recompute summaries from them.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{trial_log_path, EpisodeRecord, ExperimentResult, TrialFailure};
use super::summary::RunSummary;
use super::{ExperimentConfig, HarnessError};

pub const MANIFEST: &str = "manifest.json";
pub const EPISODES: &str = "episodes.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRIAL_REWARDS: &str = "trial_rewards.csv";
pub const TRIALS_CSV: &str = "trials.csv";

/// Machine-readable description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_name: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// False until every trial has finished.
    pub complete: bool,
    pub completed_trials: Vec<usize>,
    pub failures: Vec<TrialFailure>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            crate_name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seeds: (0..config.trials).map(|k| config.trial_seed(k)).collect(),
            complete: false,
            completed_trials: Vec::new(),
            failures: Vec::new(),
        }
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub n_trials: usize,
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    seed: u64,
    final_mean: f64,
    collapsed: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::parse(path.display().to_string(), e)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_json(&dir.join(MANIFEST), manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::parse(path.display().to_string(), e))
}

/// Writes every output file for a finished experiment.
pub fn emit_outputs(dir: &Path, config: &ExperimentConfig, result: &ExperimentResult) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let summary = &result.summary;

    let path = dir.join(EPISODES);
    let mut w = create(&path)?;
    for (_, records) in &result.trials {
        for r in records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    write_summary_csv(&dir.join(SUMMARY_CSV), summary)?;
    write_trial_rewards(&dir.join(TRIAL_REWARDS), &result.trials)?;

    let path = dir.join(TRIALS_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for (i, k) in summary.trials.iter().enumerate() {
        w.serialize(TrialRow {
            trial: *k,
            seed: config.trial_seed(*k),
            final_mean: summary.trial_final_means[i],
            collapsed: summary.collapsed[i],
        })
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    write_json(&dir.join(SUMMARY_JSON), summary)?;
    config.save(&dir.join("config.toml"))?;
    let mut manifest = Manifest::new(config);
    manifest.complete = true;
    manifest.completed_trials = summary.trials.clone();
    manifest.failures = result.failures.clone();
    write_manifest(dir, &manifest)
}

pub fn write_summary_csv(path: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for e in 0..summary.episodes {
        w.serialize(SummaryRow {
            episode: e,
            mean_reward: summary.mean_reward[e],
            std_reward: summary.std_reward[e],
            n_trials: summary.n_trials[e],
        })
        .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["episode", "mean_reward", "std_reward", "n_trials"] {
        return Err(HarnessError::parse(path.display().to_string(), "unexpected header"));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Episode-by-trial reward matrix, one column per completed trial.
pub fn write_trial_rewards(path: &Path, trials: &[(usize, Vec<EpisodeRecord>)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["episode".to_string()];
    header.extend(trials.iter().map(|(k, _)| format!("trial_{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let rows = trials.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    for e in 0..rows {
        let mut row = vec![e.to_string()];
        row.extend(
            trials
                .iter()
                .map(|(_, r)| r.get(e).map(|x| x.total_reward.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Returns trial indices and, per trial, its reward column.
pub fn read_trial_rewards(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>), HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let ids = header
        .iter()
        .skip(1)
        .map(|h| {
            h.strip_prefix("trial_")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| HarnessError::parse(path.display().to_string(), format!("column {h}")))
        })
        .collect::<Result<Vec<usize>, _>>()?;
    let mut cols = vec![Vec::new(); ids.len()];
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        for (j, cell) in row.iter().skip(1).enumerate() {
            if !cell.is_empty() {
                let v = cell
                    .parse()
                    .map_err(|e| HarnessError::parse(path.display().to_string(), e))?;
                cols[j].push(v);
            }
        }
    }
    Ok((ids, cols))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| HarnessError::parse(format!("{} line {}", path.display(), i + 1), e))?;
        out.push(record);
    }
    Ok(out)
}

/// Rebuilds the summary of a run directory from its per-trial logs. A trial
/// whose log is missing or short counts as a failure.
pub fn summarize_dir(dir: &Path) -> Result<(ExperimentConfig, ExperimentResult), HarnessError> {
    let manifest = read_manifest(dir)?;
    let config = manifest.config;
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for k in 0..config.trials {
        let path = trial_log_path(dir, k);
        let recorded = manifest.failures.iter().find(|f| f.trial == k);
        let records = if recorded.is_none() && path.is_file() {
            read_episodes(&path)?
        } else {
            Vec::new()
        };
        if recorded.is_none() && records.len() == config.episodes {
            trials.push((k, records));
        } else {
            failures.push(recorded.cloned().unwrap_or_else(|| TrialFailure {
                trial: k,
                seed: config.trial_seed(k),
                message: format!("log holds {} of {} episodes", records.len(), config.episodes),
            }));
        }
    }
    let summary = RunSummary::compute(&config, &trials, failures.clone());
    Ok((
        config,
        ExperimentResult {
            trials,
            failures,
            summary,
        },
    ))
}
