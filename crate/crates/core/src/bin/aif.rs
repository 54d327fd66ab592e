//! Command-line entry point: `train`, `summarize` and `check`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deep_aif::agent::AgentKind;
use deep_aif::envs::EnvKind;
use deep_aif::harness::{
    emit_outputs, run_experiment, summarize_dir, write_manifest, Execution, ExperimentConfig, Manifest, Preset,
    RunSummary,
};
use deep_aif::selfcheck;

#[derive(Parser)]
#[command(name = "aif", version, about = "Deep active inference agents on classic control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent over several seeded trials and write result files.
    Train(TrainArgs),
    /// Recompute the summary of a run directory from its per-trial logs.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the gradient and closed-form self-tests.
    Check,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop the entropy term of the policy objective.
    #[arg(long)]
    no_entropy: bool,
    /// Drop the epistemic term of the expected free energy.
    #[arg(long)]
    no_epistemic: bool,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Flat TOML file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run trials one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
    /// Write a checkpoint of each trial's final agent.
    #[arg(long)]
    save_checkpoints: bool,
    /// Print a progress line every N episodes of each trial.
    #[arg(long)]
    log_every: Option<usize>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn build_config(args: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(env) = &args.env {
        config.env = env.parse::<EnvKind>().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(agent) = &args.agent {
        config.agent = agent.parse::<AgentKind>().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Some(preset) = args.preset {
        preset.apply(&mut config);
    }
    if let Some(v) = args.episodes {
        config.episodes = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = &args.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = args.log_every {
        config.log_every = v;
    }
    if args.no_entropy {
        config.entropy_enabled = false;
    }
    if args.no_epistemic {
        config.epistemic_enabled = false;
    }
    if args.save_checkpoints {
        config.save_checkpoints = true;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{} on {}: {} completed trials, {} failed",
        summary.agent,
        summary.env,
        summary.trials.len(),
        summary.failures.len()
    );
    for (i, k) in summary.trials.iter().enumerate() {
        println!(
            "  trial {k:>3}: final-{} mean {:>8.2}{}",
            summary.final_window,
            summary.trial_final_means[i],
            if summary.collapsed[i] { "  (collapsed)" } else { "" }
        );
    }
    for f in &summary.failures {
        println!("  trial {:>3}: FAILED {}", f.trial, f.message);
    }
    println!(
        "  mean curve final-{} value {:.2}; collapsed {}/{}",
        summary.final_window,
        summary.final_mean_reward(),
        summary.collapse_count(),
        summary.trials.len()
    );
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let config = build_config(&args)?;
    let dir = config.out_dir.clone();
    let runtime = |e: deep_aif::harness::HarnessError| Failure::Runtime(e.to_string());
    write_manifest(&dir, &Manifest::new(&config)).map_err(runtime)?;
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = run_experiment(&config, execution, Some(&dir)).map_err(runtime)?;
    emit_outputs(&dir, &config, &result).map_err(runtime)?;
    print_summary(&result.summary);
    if result.trials.is_empty() {
        return Err(Failure::Runtime("every trial failed".into()));
    }
    Ok(())
}

fn summarize(input: PathBuf) -> Result<(), Failure> {
    let (config, result) = summarize_dir(&input).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit_outputs(&input, &config, &result).map_err(|e| Failure::Runtime(e.to_string()))?;
    print_summary(&result.summary);
    Ok(())
}

fn check() -> Result<(), Failure> {
    let report = selfcheck::run_all();
    for line in &report {
        println!("{line}");
    }
    if report.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Runtime("self-check failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => train(args),
        Command::Summarize { input } => summarize(input),
        Command::Check => check(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
