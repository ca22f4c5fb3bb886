//! Experiment commands: pretraining, training, evaluation, self-checks and
//! report rendering. The binary is a thin argument parser over these.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{parse_mode, parse_policy, ExperimentConfig};

use crate::env::{make_task, TaskConfig};
use crate::error::{Error, Result};
use crate::gesture::{goal_ordering_checksum, GestureClass, GridGeometry};
use crate::harness::{run_harness, HarnessOutcome, PolicyKind};
use crate::hierarchy::{
    act_episode, act_flat_episode, act_random_episode, class_completion_rates, gesture_pad, pretrain_gestures,
    EpisodeConfig, EpisodeRecord, FlatAgent, LevelOneAgent, LevelTwoAgent, LevelZeroAgent, LevelZeroLearner,
    PretrainReport,
};
use crate::selfcheck::{self, CheckResult, Matcher};
use crate::value::{load_approximators, save_approximators, QApproximator};

pub const LEVEL0_FILE: &str = "level0.bin";
pub const LEVEL1_FILE: &str = "level1.bin";
pub const LEVEL2_FILE: &str = "level2.json";
pub const FLAT_FILE: &str = "flat.bin";

/// Offset between training and evaluation environment seeds.
const EVAL_SEED_OFFSET: u64 = 1_000_003;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPolicy {
    Random,
    Flat,
    Hierarchy,
}

impl EvalPolicy {
    pub fn label(self) -> &'static str {
        match self {
            EvalPolicy::Random => "random",
            EvalPolicy::Flat => "flat",
            EvalPolicy::Hierarchy => "hierarchy",
        }
    }

    pub fn parse(value: &str) -> Result<Self> {
        match value {
            "random" => Ok(EvalPolicy::Random),
            "flat" => Ok(EvalPolicy::Flat),
            "hierarchy" => Ok(EvalPolicy::Hierarchy),
            _ => Err(Error::InvalidConfig(format!("unknown policy {value:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub policy: String,
    pub task: String,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    /// Mean of return divided by scored events (per fall on catch).
    pub mean_per_event: f64,
    pub success_rate: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl EvalResult {
    pub fn from_records(policy: EvalPolicy, task: &str, records: &[EpisodeRecord], seed: u64, hash: String) -> Self {
        let n = records.len().max(1) as f64;
        let mean = records.iter().map(|r| r.episode_return).sum::<f64>() / n;
        let var = records.iter().map(|r| (r.episode_return - mean).powi(2)).sum::<f64>() / n;
        Self {
            policy: policy.label().into(),
            task: task.into(),
            episodes: records.len(),
            mean_return: mean,
            std_return: var.sqrt(),
            mean_per_event: records.iter().map(EpisodeRecord::per_event).sum::<f64>() / n,
            success_rate: records.iter().filter(|r| r.success()).count() as f64 / n,
            seed,
            config_hash: hash,
        }
    }
}

/// Trained agents of one run, as held in memory.
#[derive(Clone, Debug)]
pub enum TrainedPolicy {
    Random,
    Flat(FlatAgent),
    Hierarchy { level0: LevelZeroAgent, level1: LevelOneAgent, level2: LevelTwoAgent },
}

impl TrainedPolicy {
    pub fn kind(&self) -> EvalPolicy {
        match self {
            TrainedPolicy::Random => EvalPolicy::Random,
            TrainedPolicy::Flat(_) => EvalPolicy::Flat,
            TrainedPolicy::Hierarchy { .. } => EvalPolicy::Hierarchy,
        }
    }
}

/// Greedy episodes of `policy` on `task`; deterministic given `seed`.
pub fn evaluate(policy: &TrainedPolicy, task: &TaskConfig, episode: &EpisodeConfig, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut env = make_task(&TaskConfig { seed: task.seed.wrapping_add(EVAL_SEED_OFFSET), ..task.clone() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    let greedy = episode.greedy();
    (0..episodes)
        .map(|_| match policy {
            TrainedPolicy::Random => act_random_episode(&mut env, &mut rng),
            TrainedPolicy::Flat(a) => act_flat_episode(&mut env, a, 0.0, episode.gamma_env, &mut rng).map(|r| r.0),
            TrainedPolicy::Hierarchy { level0, level1, level2 } => {
                act_episode(&mut env, &level2.with_epsilon(0.0), level1, level0, &greedy, &mut rng).map(|r| r.0)
            }
        })
        .collect()
}

fn save_single(path: &Path, geometry: &GridGeometry, q: &QApproximator) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_approximators(file, goal_ordering_checksum(geometry), &[q])
}

fn load_single(path: &Path, geometry: &GridGeometry) -> Result<QApproximator> {
    let file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| missing(path, e))?);
    let mut qs = load_approximators(file, goal_ordering_checksum(geometry))?;
    if qs.len() != 1 {
        return Err(Error::Format(format!("{} holds {} approximators, expected 1", path.display(), qs.len())));
    }
    Ok(qs.remove(0))
}

fn missing(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::InvalidConfig(format!("missing parameter file {}", path.display()))
    } else {
        Error::Io(e)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub grid: String,
    pub seed: u64,
    pub config_hash: String,
    pub budget: u64,
    pub report: PretrainReport,
    /// Greedy completion rates for tap, swipe and fling.
    pub completion: [f64; 3],
    pub threshold: f64,
    /// Trained classes below the threshold.
    pub below_threshold: Vec<String>,
}

/// Pretrains level 0 on the task grid. Returns the agent and its summary.
pub fn pretrain_level0(cfg: &ExperimentConfig) -> Result<(LevelZeroAgent, PretrainSummary)> {
    cfg.validate()?;
    let geometry = cfg.task()?.geometry;
    let l0 = &cfg.harness.level0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let agent = LevelZeroAgent::new(geometry, l0, &mut rng)?;
    let mut learner = LevelZeroLearner::new(agent, l0.clone());
    let mut env = gesture_pad(geometry, cfg.seed)?;
    env.reset();
    let report = pretrain_gestures(&mut learner, &cfg.pretrain, &mut env, &mut rng)?;
    let completion = class_completion_rates(&learner, cfg.swipe_goals, cfg.pretrain.option_timeout, &mut rng)?;
    let below_threshold = cfg
        .pretrain
        .classes
        .iter()
        .filter(|c| completion[c.index()] < cfg.completion_threshold)
        .map(|c| c.name().to_string())
        .collect();
    let summary = PretrainSummary {
        grid: geometry.to_string(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        budget: cfg.pretrain.budget,
        report,
        completion,
        threshold: cfg.completion_threshold,
        below_threshold,
    };
    Ok((learner.snapshot(), summary))
}

/// Writes `level0.bin` and `pretrain.json` into `out`.
pub fn cmd_pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<PretrainSummary> {
    let (agent, summary) = pretrain_level0(cfg)?;
    std::fs::create_dir_all(out)?;
    agent.save(&out.join(LEVEL0_FILE))?;
    write_json(&out.join("pretrain.json"), &summary)?;
    Ok(summary)
}

fn level0_source(cfg: &ExperimentConfig, run_dir: Option<&Path>) -> Option<PathBuf> {
    cfg.level0_path.clone().or_else(|| run_dir.map(|d| d.join(LEVEL0_FILE)).filter(|p| p.exists()))
}

/// Trains on the configured task and writes the report, the resolved
/// configuration and the trained parameters into `out`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<HarnessOutcome> {
    cfg.validate()?;
    let task = cfg.task()?;
    let harness = cfg.harness_config();
    std::fs::create_dir_all(out)?;
    let level0 = match harness.policy {
        PolicyKind::Flat => None,
        PolicyKind::Hierarchy => Some(match &cfg.level0_path {
            Some(p) => LevelZeroAgent::load(p, task.geometry, cfg.harness.level0.base_discount)?,
            None if cfg.inline_pretrain => {
                let (agent, summary) = pretrain_level0(cfg)?;
                write_json(&out.join("pretrain.json"), &summary)?;
                agent
            }
            None => {
                return Err(Error::InvalidConfig(
                    "hierarchy training needs level0.path, --level0 or pretrain.inline = true".into(),
                ))
            }
        }),
    };
    let outcome = run_harness(&harness, &task, cfg.budget, level0)?;
    outcome.report.write_to(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let g = task.geometry;
    if let Some(a) = &outcome.level0 {
        a.save(&out.join(LEVEL0_FILE))?;
    }
    if let Some(a) = &outcome.level1 {
        save_single(&out.join(LEVEL1_FILE), &g, a.approximator())?;
    }
    if let Some(a) = &outcome.level2 {
        write_json(&out.join(LEVEL2_FILE), a)?;
    }
    if let Some(a) = &outcome.flat {
        save_single(&out.join(FLAT_FILE), &g, a.approximator())?;
    }
    Ok(outcome)
}

/// Loads the parameters `policy` needs from `run_dir`. The random policy
/// reads nothing.
pub fn load_policy(cfg: &ExperimentConfig, policy: EvalPolicy, run_dir: &Path) -> Result<TrainedPolicy> {
    let g = cfg.task()?.geometry;
    Ok(match policy {
        EvalPolicy::Random => TrainedPolicy::Random,
        EvalPolicy::Flat => TrainedPolicy::Flat(FlatAgent::from_parts(g, load_single(&run_dir.join(FLAT_FILE), &g)?)?),
        EvalPolicy::Hierarchy => {
            let p0 = level0_source(cfg, Some(run_dir))
                .ok_or_else(|| Error::InvalidConfig(format!("missing parameter file {}", run_dir.join(LEVEL0_FILE).display())))?;
            let level0 = LevelZeroAgent::load(&p0, g, cfg.harness.level0.base_discount)?;
            let level1 = LevelOneAgent::from_parts(g, load_single(&run_dir.join(LEVEL1_FILE), &g)?)?;
            let p2 = run_dir.join(LEVEL2_FILE);
            let text = std::fs::read_to_string(&p2).map_err(|e| missing(&p2, e))?;
            let level2: LevelTwoAgent = serde_json::from_str(&text)?;
            TrainedPolicy::Hierarchy { level0, level1, level2 }
        }
    })
}

/// Greedy evaluation of `policy` with parameters from `run_dir`; writes
/// `eval_<policy>.json` there.
pub fn cmd_eval(cfg: &ExperimentConfig, policy: EvalPolicy, run_dir: &Path) -> Result<EvalResult> {
    if cfg.eval_episodes == 0 {
        return Err(Error::InvalidConfig("eval.episodes must be at least 1".into()));
    }
    let task = cfg.task()?;
    let trained = load_policy(cfg, policy, run_dir)?;
    let records = evaluate(&trained, &task, &cfg.harness.episode, cfg.eval_episodes, cfg.seed)?;
    let result = EvalResult::from_records(policy, &task.name, &records, cfg.seed, cfg.config_hash());
    std::fs::create_dir_all(run_dir)?;
    write_json(&run_dir.join(format!("eval_{}.json", policy.label())), &result)?;
    Ok(result)
}

pub fn cmd_selfcheck(matcher: &Matcher) -> Vec<CheckResult> {
    selfcheck::run_all_with(matcher)
}

/// Plain-text digest of a run directory.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    let mut out = String::new();
    let summary_path = run_dir.join("summary.json");
    if summary_path.exists() {
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary_path)?)?;
        let _ = writeln!(
            out,
            "run: task={} policy={} mode={} seed={} config_hash={}",
            s["task"], s["policy"], s["mode"], s["seed"], s["config_hash"]
        );
        let _ = writeln!(
            out,
            "steps={} episodes={} mean_return={:.4} last100_mean_return={:.4} last100_success={:.3}",
            s["total_steps"],
            s["episode_count"],
            s["mean_return"].as_f64().unwrap_or(f64::NAN),
            s["last100_mean_return"].as_f64().unwrap_or(f64::NAN),
            s["last100_success"].as_f64().unwrap_or(f64::NAN)
        );
        if let Some(levels) = s["levels"].as_array() {
            for l in levels {
                let _ = writeln!(
                    out,
                    "level {}: emitted={} received={} violations={} updates={} version={}",
                    l["level"], l["emitted"], l["received"], l["violations"], l["updates"], l["final_version"]
                );
            }
        }
        out.push_str(&return_curve(&run_dir.join("episodes.csv"), 10)?);
    }
    let pretrain = run_dir.join("pretrain.json");
    if pretrain.exists() {
        let p: PretrainSummary = serde_json::from_str(&std::fs::read_to_string(&pretrain)?)?;
        let rates: Vec<String> =
            GestureClass::ALL.iter().map(|c| format!("{}={:.3}", c.name(), p.completion[c.index()])).collect();
        let _ = writeln!(out, "pretrain {} budget={}: {}", p.grid, p.budget, rates.join(" "));
    }
    for policy in [EvalPolicy::Random, EvalPolicy::Flat, EvalPolicy::Hierarchy] {
        let path = run_dir.join(format!("eval_{}.json", policy.label()));
        if path.exists() {
            let e: EvalResult = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            let _ = writeln!(
                out,
                "eval {:<9} return {:.4} +- {:.4} per_event {:.4} success {:.3} over {} episodes",
                e.policy, e.mean_return, e.std_return, e.mean_per_event, e.success_rate, e.episodes
            );
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig(format!("{} holds no run outputs", run_dir.display())));
    }
    Ok(out)
}

/// Mean return over `bins` consecutive slices of the episode log.
fn return_curve(path: &Path, bins: usize) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let returns: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("actor"))
        .filter_map(|l| l.split(',').nth(3).and_then(|v| v.parse().ok()))
        .collect();
    let mut out = String::from("return curve:");
    if returns.is_empty() {
        out.push_str(" (no episodes)\n");
        return Ok(out);
    }
    let size = returns.len().div_ceil(bins);
    for chunk in returns.chunks(size) {
        let _ = write!(out, " {:.3}", chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    out.push('\n');
    Ok(out)
}
