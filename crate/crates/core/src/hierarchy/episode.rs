//! Whole episodes for the hierarchy, the flat baseline and a random policy.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::level0::GesturePolicy;
use super::level1::{level1_transition, LevelOneAgent, ObservationEncoder, DEFAULT_GAMMA_ENV};
use super::level2::LevelTwoAgent;
use super::options::{run_option, Termination};
use crate::env::{Environment, PrimitiveAction};
use crate::error::{Error, Result};
use crate::gesture::{GestureClass, GestureGoal, DEFAULT_OPTION_TIMEOUT};
use crate::value::{
    epsilon_greedy, her_relabel, Mlp, QApproximator, RelabeledTransition, Transition, DEFAULT_RELABEL_BUDGET,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassFrequency {
    PerEpisode,
    PerOption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub option_timeout: usize,
    pub gamma_env: f64,
    pub relabel_budget: usize,
    pub class_frequency: ClassFrequency,
    pub level0_epsilon: f64,
    pub level1_epsilon: f64,
    /// Emit hindsight-relabeled level-0 transitions.
    pub collect_level0: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            option_timeout: DEFAULT_OPTION_TIMEOUT,
            gamma_env: DEFAULT_GAMMA_ENV,
            relabel_budget: DEFAULT_RELABEL_BUDGET,
            class_frequency: ClassFrequency::PerEpisode,
            level0_epsilon: 0.0,
            level1_epsilon: 0.1,
            collect_level0: false,
        }
    }
}

impl EpisodeConfig {
    pub fn greedy(&self) -> Self {
        Self { level0_epsilon: 0.0, level1_epsilon: 0.0, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionLog {
    pub class: GestureClass,
    pub goal: GestureGoal,
    pub steps: usize,
    pub reward: f64,
    pub rewards: Vec<f64>,
    pub termination: Termination,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_return: f64,
    pub steps: u64,
    pub scored_events: u32,
    pub options: Vec<OptionLog>,
}

impl EpisodeRecord {
    /// At least one positive reward was collected.
    pub fn success(&self) -> bool {
        self.episode_return > 0.0
    }

    /// Return per scored event (per fall on catch).
    pub fn per_event(&self) -> f64 {
        self.episode_return / f64::from(self.scored_events.max(1))
    }
}

/// What level 2 learns from: one sample per class decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub class: GestureClass,
    pub reward_sum: f64,
    pub steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeBatches {
    pub level0: Vec<RelabeledTransition>,
    pub level1: Vec<Transition>,
    pub level2: Vec<ClassStat>,
}

/// One full episode of the three-level stack. Level 2 picks a class, level 1
/// repeatedly picks a goal of that class and level 0 executes it.
pub fn act_episode<P: GesturePolicy + ?Sized, R: Rng + ?Sized>(
    env: &mut Environment,
    level2: &LevelTwoAgent,
    level1: &LevelOneAgent,
    level0: &P,
    config: &EpisodeConfig,
    rng: &mut R,
) -> Result<(EpisodeRecord, EpisodeBatches)> {
    if level0.encoder().geometry() != env.geometry() || level1.encoder().geometry() != env.geometry() {
        return Err(Error::InvalidConfig(format!("agent grid does not match task grid {}", env.geometry())));
    }
    let mut record = EpisodeRecord::default();
    let mut batches = EpisodeBatches::default();
    let mut obs = env.reset();
    let mut class = level2.select_class(rng);
    let mut class_reward = 0.0;
    let mut class_steps = 0u64;
    loop {
        let sel = level1.select_gvf(&obs.image, &obs.aux, class, config.level1_epsilon, rng)?;
        let option = run_option(env, level0, sel.goal, config.level0_epsilon, config.option_timeout, rng)?;
        let ended = option.final_step.episode_end;
        class_reward += option.reward;
        class_steps += option.steps as u64;

        let next_class = match config.class_frequency {
            ClassFrequency::PerOption if !ended => {
                batches.level2.push(ClassStat { class, reward_sum: class_reward, steps: class_steps });
                class_reward = 0.0;
                class_steps = 0;
                level2.select_class(rng)
            }
            _ => class,
        };
        batches.level1.push(level1_transition(level1, &obs, &sel.goal, &option, next_class, config.gamma_env)?);
        if config.collect_level0 {
            batches.level0.extend(her_relabel(&option.trajectory, sel.goal, config.relabel_budget, level0.encoder(), rng));
        }
        record.episode_return += option.reward;
        record.options.push(OptionLog {
            class,
            goal: sel.goal,
            steps: option.steps,
            reward: option.reward,
            rewards: option.rewards.clone(),
            termination: option.termination,
        });
        obs = option.final_step;
        class = next_class;
        if ended {
            break;
        }
    }
    if class_steps > 0 {
        batches.level2.push(ClassStat { class, reward_sum: class_reward, steps: class_steps });
    }
    record.steps = env.actions();
    record.scored_events = env.scored_events();
    Ok((record, batches))
}

/// Flat baseline: one network from observation features straight to the
/// primitive touch/lift actions.
#[derive(Clone, Debug)]
pub struct FlatAgent {
    encoder: ObservationEncoder,
    q: QApproximator,
    mask: Arc<[bool]>,
}

impl FlatAgent {
    pub fn new(geometry: crate::gesture::GridGeometry, hidden: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let encoder = ObservationEncoder::new(geometry);
        let n_out = PrimitiveAction::space_size(&geometry);
        let mut sizes = vec![encoder.layout().len()];
        sizes.extend(hidden);
        sizes.push(n_out);
        Self { encoder, q: QApproximator::network(Mlp::new(&sizes, rng)), mask: vec![true; n_out].into() }
    }

    pub fn from_parts(geometry: crate::gesture::GridGeometry, q: QApproximator) -> Result<Self> {
        let encoder = ObservationEncoder::new(geometry);
        let n_out = PrimitiveAction::space_size(&geometry);
        if q.input_size() != encoder.layout().len() || q.output_size() != n_out {
            return Err(Error::SizeMismatch { expected: n_out, got: q.output_size() });
        }
        Ok(Self { encoder, q, mask: vec![true; n_out].into() })
    }

    pub fn encoder(&self) -> &ObservationEncoder {
        &self.encoder
    }

    pub fn approximator(&self) -> &QApproximator {
        &self.q
    }
}

pub fn act_flat_episode<R: Rng + ?Sized>(
    env: &mut Environment,
    agent: &FlatAgent,
    epsilon: f64,
    gamma_env: f64,
    rng: &mut R,
) -> Result<(EpisodeRecord, Vec<Transition>)> {
    if agent.encoder.geometry() != env.geometry() {
        return Err(Error::InvalidConfig(format!("agent grid does not match task grid {}", env.geometry())));
    }
    let geometry = *env.geometry();
    let mut record = EpisodeRecord::default();
    let mut transitions = Vec::new();
    let mut features = agent.encoder.encode_step(&env.reset());
    loop {
        let q = agent.q.q_values(&features)?;
        let a = epsilon_greedy(&q, &agent.mask, epsilon, rng)?;
        let out = env.step(PrimitiveAction::from_index(&geometry, a))?;
        let next = agent.encoder.encode_step(&out);
        record.episode_return += out.reward;
        transitions.push(Transition {
            features,
            actions: vec![a],
            cumulant: out.reward,
            continuation: if out.episode_end { 0.0 } else { gamma_env },
            next_features: next.clone(),
            next_action_mask: Arc::clone(&agent.mask),
        });
        features = next;
        if out.episode_end {
            break;
        }
    }
    record.steps = env.actions();
    record.scored_events = env.scored_events();
    Ok((record, transitions))
}

/// Uniformly random primitive actions; touches no parameters.
pub fn act_random_episode<R: Rng + ?Sized>(env: &mut Environment, rng: &mut R) -> Result<EpisodeRecord> {
    let geometry = *env.geometry();
    let n = PrimitiveAction::space_size(&geometry);
    let mut record = EpisodeRecord::default();
    env.reset();
    loop {
        let out = env.step(PrimitiveAction::from_index(&geometry, rng.gen_range(0..n)))?;
        record.episode_return += out.reward;
        if out.episode_end {
            break;
        }
    }
    record.steps = env.actions();
    record.scored_events = env.scored_events();
    Ok(record)
}

/// Writes one JSON line per option.
pub fn write_episode_log<W: Write>(mut out: W, episode: u64, record: &EpisodeRecord) -> Result<()> {
    for (i, o) in record.options.iter().enumerate() {
        let line = serde_json::json!({
            "episode": episode,
            "option": i,
            "class": o.class.name(),
            "goal": o.goal.to_string(),
            "steps": o.steps,
            "reward": o.reward,
            "rewards": o.rewards,
            "termination": o.termination.name(),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

