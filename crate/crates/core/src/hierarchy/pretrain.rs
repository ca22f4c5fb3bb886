//! Reward-free gesture pretraining and completion-rate evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::level0::{GesturePolicy, LevelZeroLearner};
use super::options::{run_option, Termination};
use crate::env::{make_task, Environment, TaskConfig};
use crate::error::{Error, Result};
use crate::gesture::{
    Cell, Direction, GestureClass, GestureGoal, GridGeometry, DEFAULT_OPTION_TIMEOUT,
};
use crate::value::{her_relabel, EpsilonSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Primitive-step budget.
    pub budget: u64,
    pub option_timeout: usize,
    /// Learner updates (per class approximator) per primitive step.
    pub updates_per_step: f64,
    pub epsilon: EpsilonSchedule,
    /// Classes the goal sampler draws from, uniformly.
    pub classes: Vec<GestureClass>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            budget: 200_000,
            option_timeout: DEFAULT_OPTION_TIMEOUT,
            updates_per_step: 0.25,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.1, decay_steps: 100_000 },
            classes: GestureClass::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: u64,
    pub options: u64,
    pub updates: u64,
    /// Behavior-goal completions per class during training.
    pub completed: [u64; 3],
    pub attempted: [u64; 3],
}

/// A uniform goal of `class`.
pub fn sample_goal<R: Rng + ?Sized>(geometry: &GridGeometry, class: GestureClass, rng: &mut R) -> GestureGoal {
    let n = geometry.n_cells();
    match class {
        GestureClass::Tap => GestureGoal::Tap(Cell(rng.gen_range(0..n))),
        GestureClass::Swipe => GestureGoal::Swipe { start: Cell(rng.gen_range(0..n)), end: Cell(rng.gen_range(0..n)) },
        GestureClass::Fling => GestureGoal::Fling(Direction::ALL[rng.gen_range(0..8)]),
    }
}

/// The reward-free pad on `geometry`, long enough never to end mid-run.
pub fn gesture_pad(geometry: GridGeometry, seed: u64) -> Result<Environment> {
    make_task(&TaskConfig {
        name: "gesture_pad".into(),
        geometry,
        seed,
        latency_ticks: 0,
        episode_limit: 1_000_000,
    })
}

/// Runs options toward uniformly sampled goals on a reward-free task and
/// trains the level-0 approximators with hindsight relabeling.
pub fn pretrain_gestures<R: Rng + ?Sized>(
    learner: &mut LevelZeroLearner,
    config: &PretrainConfig,
    env: &mut Environment,
    rng: &mut R,
) -> Result<PretrainReport> {
    if config.classes.is_empty() {
        return Err(Error::InvalidConfig("pretraining needs at least one gesture class".into()));
    }
    if env.geometry() != learner.encoder().geometry() {
        return Err(Error::InvalidConfig(format!("level 0 grid does not match task grid {}", env.geometry())));
    }
    let geometry = *env.geometry();
    let budget_relabel = learner.config().relabel_budget;
    let mut report = PretrainReport::default();
    let mut owed = 0.0;
    while report.steps < config.budget {
        if env.is_done() {
            env.reset();
        }
        let class = *config.classes.choose(rng).expect("non-empty");
        let goal = sample_goal(&geometry, class, rng);
        let eps = config.epsilon.value(report.steps);
        let max_len = config.option_timeout.min((config.budget - report.steps) as usize);
        let option = run_option(env, learner, goal, eps, max_len, rng)?;
        report.steps += option.steps as u64;
        report.options += 1;
        report.attempted[class.index()] += 1;
        if option.termination == Termination::Completed {
            report.completed[class.index()] += 1;
        }
        let relabeled = her_relabel(&option.trajectory, goal, budget_relabel, learner.encoder(), rng);
        learner.ingest(relabeled);
        owed += option.steps as f64 * config.updates_per_step;
        while owed >= 1.0 {
            owed -= 1.0;
            if learner.train_step()?.is_some() {
                report.updates += 1;
            }
        }
    }
    Ok(report)
}

/// Fraction of `goals` completed greedily within `max_len` steps, each
/// attempted from a freshly reset pad with the finger lifted.
pub fn completion_rate<P: GesturePolicy + ?Sized>(policy: &P, goals: &[GestureGoal], max_len: usize) -> Result<f64> {
    if goals.is_empty() {
        return Ok(0.0);
    }
    let mut env = gesture_pad(*policy.encoder().geometry(), 0)?;
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut hits = 0;
    for goal in goals {
        env.reset();
        let o = run_option(&mut env, policy, *goal, 0.0, max_len, &mut rng)?;
        if o.termination == Termination::Completed {
            hits += 1;
        }
    }
    Ok(hits as f64 / goals.len() as f64)
}

/// Completion rate per class over all taps, all flings and `swipes`
/// uniformly drawn swipe goals.
pub fn class_completion_rates<P: GesturePolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    swipes: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<[f64; 3]> {
    let geometry = *policy.encoder().geometry();
    let taps: Vec<_> = geometry.cells().map(GestureGoal::Tap).collect();
    let swipe_goals: Vec<_> = (0..swipes).map(|_| sample_goal(&geometry, GestureClass::Swipe, rng)).collect();
    let flings: Vec<_> = Direction::ALL.iter().map(|&d| GestureGoal::Fling(d)).collect();
    Ok([
        completion_rate(policy, &taps, max_len)?,
        completion_rate(policy, &swipe_goals, max_len)?,
        completion_rate(policy, &flings, max_len)?,
    ])
}
