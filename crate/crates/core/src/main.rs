use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gesture_hrl::experiment::{self, EvalPolicy, ExperimentConfig};
use gesture_hrl::gesture::completed_gestures;
use gesture_hrl::harness::Mode;
use gesture_hrl::Result;

#[derive(Parser, Debug)]
#[command(name = "gesture-hrl", version, about = "Gesture hierarchy experiments on toy touch tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Concurrent,
    Deterministic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Random,
    Flat,
    Hierarchy,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for outputs and trained parameters.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reward-free gesture pretraining of level 0.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Train on the configured task.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Pretrained level-0 parameter file.
        #[arg(long)]
        level0: Option<PathBuf>,
    },
    /// Greedy evaluation of a trained or random policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "hierarchy")]
        policy: PolicyArg,
        #[arg(long)]
        level0: Option<PathBuf>,
    },
    /// Gesture oracle, Bellman fixed point and gradient checks.
    Selfcheck,
    /// Summarize a run directory.
    Report {
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn policy_label(p: PolicyArg) -> &'static str {
    match p {
        PolicyArg::Random => "random",
        PolicyArg::Flat => "flat",
        PolicyArg::Hierarchy => "hierarchy",
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Pretrain { common } => {
            let cfg = load(&common)?;
            let s = experiment::cmd_pretrain(&cfg, &common.out)?;
            println!(
                "pretrained {} for {} steps: tap {:.3} swipe {:.3} fling {:.3}",
                s.grid, s.report.steps, s.completion[0], s.completion[1], s.completion[2]
            );
            if !s.below_threshold.is_empty() {
                eprintln!("warning: below threshold {}: {}", s.threshold, s.below_threshold.join(", "));
            }
        }
        Command::Train { common, mode, policy, level0 } => {
            let mut cfg = load(&common)?;
            if let Some(m) = mode {
                cfg.harness.mode = match m {
                    ModeArg::Concurrent => Mode::Concurrent,
                    ModeArg::Deterministic => Mode::Deterministic,
                };
            }
            if let Some(p) = policy {
                cfg.harness.policy = experiment::parse_policy(policy_label(p))?;
            }
            if level0.is_some() {
                cfg.level0_path = level0;
            }
            let out = experiment::cmd_train(&cfg, &common.out)?;
            let r = &out.report;
            println!(
                "trained {} on {} for {} steps in {} episodes ({:.0} steps/s); outputs in {}",
                r.policy,
                r.task,
                r.total_steps,
                r.episodes.len(),
                out.steps_per_second(),
                common.out.display()
            );
        }
        Command::Eval { common, policy, level0 } => {
            let mut cfg = load(&common)?;
            if level0.is_some() {
                cfg.level0_path = level0;
            }
            let e = experiment::cmd_eval(&cfg, EvalPolicy::parse(policy_label(policy))?, &common.out)?;
            println!(
                "{} on {}: return {:.4} +- {:.4}, per event {:.4}, success {:.3} over {} episodes",
                e.policy, e.task, e.mean_return, e.std_return, e.mean_per_event, e.success_rate, e.episodes
            );
        }
        Command::Selfcheck => {
            let results = experiment::cmd_selfcheck(&completed_gestures);
            for r in &results {
                println!("{} {}: {} ({:.2?})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail, r.elapsed);
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { out } => print!("{}", experiment::cmd_report(&out)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
