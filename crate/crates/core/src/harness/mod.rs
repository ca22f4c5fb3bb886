//! Actors, one learner per level and a parameter store.
//!
//! CONCURRENT mode runs actors and learners on their own threads connected
//! by bounded queues. DETERMINISTIC mode executes a fixed round-robin plan
//! in the calling thread so that identical seeds give identical reports.

pub mod report;
pub mod route;
pub mod store;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{make_task, TaskConfig};
use crate::error::{Error, Result};
use crate::gesture::goal_ordering_checksum;
use crate::hierarchy::{
    act_episode, act_flat_episode, DqnLearner, EpisodeConfig, FlatAgent, Level0Config, Level1Config, LevelOneAgent,
    LevelTwoAgent, LevelZeroAgent, LevelZeroLearner,
};
use crate::value::{EpsilonSchedule, TdConfig};

pub use report::{EpisodeRow, LevelStats, LossRow, TrainingReport};
pub use route::{Payload, Router, TransitionEnvelope};
pub use store::{ParameterSnapshot, ParameterStore, SnapshotPayload, LEVELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Concurrent,
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Hierarchy,
    Flat,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Hierarchy => "hierarchy",
            PolicyKind::Flat => "flat",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatConfig {
    pub hidden: Vec<usize>,
    pub td: TdConfig,
    pub replay_capacity: usize,
}

impl Default for FlatConfig {
    fn default() -> Self {
        Self { hidden: vec![256, 128], td: TdConfig::network_default(), replay_capacity: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub actors: usize,
    pub queue_capacity: usize,
    /// Episodes between snapshot fetches.
    pub fetch_period: u64,
    /// Updates between snapshot publications in concurrent mode.
    pub publish_period: u64,
    /// Updates per learner per round in deterministic mode.
    pub updates_per_round: usize,
    pub mode: Mode,
    pub policy: PolicyKind,
    pub seed: u64,
    pub level0: Level0Config,
    /// Keep training level 0 on task experience.
    pub train_level0: bool,
    pub level1: Level1Config,
    pub level2_epsilon: f64,
    pub flat: FlatConfig,
    pub episode: EpisodeConfig,
    /// Exploration at level 1 (hierarchy) or over primitives (flat),
    /// indexed by global primitive steps.
    pub epsilon: EpsilonSchedule,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            actors: 1,
            queue_capacity: 4096,
            fetch_period: 1,
            publish_period: 16,
            updates_per_round: 16,
            mode: Mode::Deterministic,
            policy: PolicyKind::Hierarchy,
            seed: 0,
            level0: Level0Config::default(),
            train_level0: false,
            level1: Level1Config::default(),
            level2_epsilon: 0.1,
            flat: FlatConfig::default(),
            episode: EpisodeConfig::default(),
            epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay_steps: 50_000 },
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.actors < 1 {
            return Err(Error::InvalidConfig("at least one actor is required".into()));
        }
        let batch = self.level0.td.batch_size.max(self.level1.td.batch_size).max(self.flat.td.batch_size);
        if self.queue_capacity < batch {
            return Err(Error::InvalidConfig(format!(
                "queue capacity {} is below the batch size {batch}",
                self.queue_capacity
            )));
        }
        if self.fetch_period < 1 || self.publish_period < 1 {
            return Err(Error::InvalidConfig("fetch and publish periods must be at least 1".into()));
        }
        if self.episode.option_timeout < 1 {
            return Err(Error::InvalidConfig("option timeout must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.level2_epsilon) {
            return Err(Error::InvalidConfig("level-2 epsilon must lie in [0, 1]".into()));
        }
        self.level0.td.validate()?;
        self.level1.td.validate()?;
        self.flat.td.validate()
    }

    fn levels(&self) -> Vec<usize> {
        match self.policy {
            PolicyKind::Hierarchy => vec![0, 1, 2],
            PolicyKind::Flat => vec![0],
        }
    }
}

/// One step of the deterministic round-robin plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStep {
    Episode { actor: usize },
    Update { level: usize, count: usize },
    Publish { level: usize },
}

/// One round: every actor runs an episode in id order, then every learner
/// runs its update block, then every learner publishes. Rounds repeat until
/// the step budget is spent. The plan has no random element; the seed only
/// feeds the generators it drives.
pub fn deterministic_schedule(config: &HarnessConfig, _seed: u64) -> Vec<PlanStep> {
    let mut plan: Vec<PlanStep> = (0..config.actors).map(|actor| PlanStep::Episode { actor }).collect();
    for &level in &config.levels() {
        plan.push(PlanStep::Update { level, count: config.updates_per_round });
    }
    for &level in &config.levels() {
        plan.push(PlanStep::Publish { level });
    }
    plan
}

/// Per-level learner state.
#[derive(Debug)]
pub enum LevelLearner {
    Zero { learner: LevelZeroLearner, train: bool },
    One(DqnLearner, crate::gesture::GridGeometry),
    Two(LevelTwoAgent),
    Flat(DqnLearner, crate::gesture::GridGeometry),
}

impl LevelLearner {
    pub fn level(&self) -> usize {
        match self {
            LevelLearner::Zero { .. } | LevelLearner::Flat(..) => 0,
            LevelLearner::One(..) => 1,
            LevelLearner::Two(_) => 2,
        }
    }

    /// Stores `envelope`, or reports it as a routing violation.
    fn ingest(&mut self, envelope: TransitionEnvelope) -> std::result::Result<(), TransitionEnvelope> {
        if envelope.level != self.level() || envelope.payload.level() != self.level() {
            return Err(envelope);
        }
        match (self, envelope.payload) {
            (LevelLearner::Zero { learner, .. }, Payload::Level0(t)) => learner.ingest([t]),
            (LevelLearner::One(l, _), Payload::Level1(t)) => l.ingest([t]),
            (LevelLearner::Flat(l, _), Payload::Flat(t)) => l.ingest([t]),
            (LevelLearner::Two(agent), Payload::Level2(s)) => {
                if s.steps > 0 {
                    agent.update(s.class, s.reward_sum, s.steps).expect("positive steps");
                }
            }
            (_, payload) => {
                return Err(TransitionEnvelope { payload, ..envelope });
            }
        }
        Ok(())
    }

    fn train_step(&mut self) -> Result<Option<f64>> {
        match self {
            LevelLearner::Zero { learner, train: true } => learner.train_step(),
            LevelLearner::Zero { train: false, .. } | LevelLearner::Two(_) => Ok(None),
            LevelLearner::One(l, _) | LevelLearner::Flat(l, _) => l.train_step(),
        }
    }

    fn can_train(&self) -> bool {
        !matches!(self, LevelLearner::Zero { train: false, .. } | LevelLearner::Two(_))
    }

    fn snapshot(&self) -> Result<SnapshotPayload> {
        Ok(match self {
            LevelLearner::Zero { learner, .. } => SnapshotPayload::Level0(Arc::new(learner.snapshot())),
            LevelLearner::One(l, g) => SnapshotPayload::Level1(Arc::new(LevelOneAgent::from_parts(*g, l.online().clone())?)),
            LevelLearner::Two(a) => SnapshotPayload::Level2(a.clone()),
            LevelLearner::Flat(l, g) => SnapshotPayload::Flat(Arc::new(FlatAgent::from_parts(*g, l.online().clone())?)),
        })
    }

    fn stored(&self) -> u64 {
        match self {
            LevelLearner::Zero { learner, .. } => learner.stored(),
            LevelLearner::One(l, _) | LevelLearner::Flat(l, _) => l.stored(),
            LevelLearner::Two(a) => a.counts.iter().sum(),
        }
    }
}

/// Learner bookkeeping shared by both modes.
#[derive(Debug)]
pub(crate) struct LearnerSlot {
    learner: LevelLearner,
    received: u64,
    violations: u64,
    updates: u64,
    losses: Vec<LossRow>,
}

impl LearnerSlot {
    fn new(learner: LevelLearner) -> Self {
        Self { learner, received: 0, violations: 0, updates: 0, losses: Vec::new() }
    }

    fn receive(&mut self, envelope: TransitionEnvelope) {
        self.received += 1;
        if self.learner.ingest(envelope).is_err() {
            self.violations += 1;
        }
    }

    fn update(&mut self) -> Result<bool> {
        match self.learner.train_step()? {
            Some(loss) => {
                self.updates += 1;
                self.losses.push(LossRow { level: self.learner.level(), update: self.updates, loss });
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

/// Everything a run produces: the serializable report and the final agents.
#[derive(Debug)]
pub struct HarnessOutcome {
    pub report: TrainingReport,
    pub level0: Option<Arc<LevelZeroAgent>>,
    pub level1: Option<Arc<LevelOneAgent>>,
    pub level2: Option<LevelTwoAgent>,
    pub flat: Option<Arc<FlatAgent>>,
    pub elapsed: Duration,
}

impl HarnessOutcome {
    pub fn steps_per_second(&self) -> f64 {
        self.report.total_steps as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

fn build_learners(config: &HarnessConfig, task: &TaskConfig, level0: Option<LevelZeroAgent>) -> Result<Vec<LearnerSlot>> {
    let geometry = task.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1ea7_0000);
    let seeded = |td: TdConfig, level: u64| TdConfig { seed: config.seed.wrapping_mul(31).wrapping_add(level), ..td };
    match config.policy {
        PolicyKind::Flat => {
            let agent = FlatAgent::new(geometry, &config.flat.hidden, &mut rng);
            let l = DqnLearner::new(agent.approximator().clone(), seeded(config.flat.td, 0), config.flat.replay_capacity);
            Ok(vec![LearnerSlot::new(LevelLearner::Flat(l, geometry))])
        }
        PolicyKind::Hierarchy => {
            let l0 = match level0 {
                Some(a) => {
                    if *a.geometry() != geometry {
                        return Err(Error::InvalidConfig(format!(
                            "level 0 was trained on {} but the task grid is {geometry}",
                            a.geometry()
                        )));
                    }
                    a
                }
                None => LevelZeroAgent::new(geometry, &config.level0, &mut rng)?,
            };
            let l0cfg = Level0Config { td: seeded(config.level0.td, 0), ..config.level0.clone() };
            let a1 = LevelOneAgent::new(geometry, &config.level1, &mut rng);
            let l1 = DqnLearner::new(a1.approximator().clone(), seeded(config.level1.td, 1), config.level1.replay_capacity);
            Ok(vec![
                LearnerSlot::new(LevelLearner::Zero { learner: LevelZeroLearner::new(l0, l0cfg), train: config.train_level0 }),
                LearnerSlot::new(LevelLearner::One(l1, geometry)),
                LearnerSlot::new(LevelLearner::Two(LevelTwoAgent::new(config.level2_epsilon))),
            ])
        }
    }
}

/// An actor's private stack: environment, generator, current snapshots.
struct Actor {
    id: usize,
    env: crate::env::Environment,
    rng: ChaCha8Rng,
    snapshots: [Option<Arc<ParameterSnapshot>>; LEVELS],
    episodes: u64,
    monotone: bool,
}

impl Actor {
    fn new(id: usize, config: &HarnessConfig, task: &TaskConfig) -> Result<Self> {
        let env_cfg = TaskConfig { seed: task.seed.wrapping_add(id as u64 * 7919), ..task.clone() };
        Ok(Self {
            id,
            env: make_task(&env_cfg)?,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9).wrapping_add(id as u64 + 1)),
            snapshots: Default::default(),
            episodes: 0,
            monotone: true,
        })
    }

    fn refresh(&mut self, store: &ParameterStore, levels: &[usize], fetch_period: u64) -> Result<()> {
        if !self.episodes.is_multiple_of(fetch_period) && self.snapshots.iter().any(Option::is_some) {
            return Ok(());
        }
        for &level in levels {
            let snap = store.fetch(level)?;
            if let Some(old) = &self.snapshots[level] {
                if snap.version < old.version {
                    self.monotone = false;
                }
            }
            self.snapshots[level] = Some(snap);
        }
        Ok(())
    }

    fn versions(&self) -> [u64; LEVELS] {
        std::array::from_fn(|k| self.snapshots[k].as_ref().map_or(0, |s| s.version))
    }

    /// Runs one episode on the current snapshots.
    fn episode(&mut self, config: &HarnessConfig, global_steps: u64) -> Result<(EpisodeRow, Vec<TransitionEnvelope>)> {
        let eps = config.epsilon.value(global_steps);
        let episode = self.episodes;
        let wrap = |level: usize, payload: Payload| TransitionEnvelope { level, actor: self.id, episode, payload };
        let versions = self.versions();
        let (record, envelopes) = match config.policy {
            PolicyKind::Flat => {
                let Some(SnapshotPayload::Flat(agent)) = self.snapshots[0].as_ref().map(|s| &s.payload) else {
                    return Err(Error::NoSnapshot(0));
                };
                let agent = Arc::clone(agent);
                let (rec, ts) = act_flat_episode(&mut self.env, &agent, eps, config.episode.gamma_env, &mut self.rng)?;
                (rec, ts.into_iter().map(|t| wrap(0, Payload::Flat(t))).collect::<Vec<_>>())
            }
            PolicyKind::Hierarchy => {
                let (l0, l1, l2) = match (
                    self.snapshots[0].as_ref().map(|s| &s.payload),
                    self.snapshots[1].as_ref().map(|s| &s.payload),
                    self.snapshots[2].as_ref().map(|s| &s.payload),
                ) {
                    (Some(SnapshotPayload::Level0(a)), Some(SnapshotPayload::Level1(b)), Some(SnapshotPayload::Level2(c))) => {
                        (Arc::clone(a), Arc::clone(b), c.clone())
                    }
                    _ => return Err(Error::NoSnapshot(0)),
                };
                let ep_cfg = EpisodeConfig {
                    level1_epsilon: eps,
                    collect_level0: config.train_level0,
                    ..config.episode.clone()
                };
                let (rec, b) = act_episode(&mut self.env, &l2, &l1, l0.as_ref(), &ep_cfg, &mut self.rng)?;
                let mut out = Vec::with_capacity(b.level0.len() + b.level1.len() + b.level2.len());
                out.extend(b.level0.into_iter().map(|t| wrap(0, Payload::Level0(t))));
                out.extend(b.level1.into_iter().map(|t| wrap(1, Payload::Level1(t))));
                out.extend(b.level2.into_iter().map(|s| wrap(2, Payload::Level2(s))));
                (rec, out)
            }
        };
        self.episodes += 1;
        let row = EpisodeRow {
            actor: self.id,
            actor_episode: episode,
            steps: record.steps,
            episode_return: record.episode_return,
            per_event: record.per_event(),
            success: record.success(),
            class: record.options.first().map(|o| o.class.name().to_string()).unwrap_or_default(),
            options: record.options.len() as u64,
            versions,
            global_steps: 0,
        };
        Ok((row, envelopes))
    }
}

/// Trains on `task` until `budget` primitive steps have been taken.
/// `level0` is an optional pretrained gesture policy for the task grid.
pub fn run_harness(
    config: &HarnessConfig,
    task: &TaskConfig,
    budget: u64,
    level0: Option<LevelZeroAgent>,
) -> Result<HarnessOutcome> {
    config.validate()?;
    let started = Instant::now();
    let checksum = goal_ordering_checksum(&task.geometry);
    let slots = build_learners(config, task, level0)?;
    let store = ParameterStore::new(checksum);
    for slot in &slots {
        store.publish(slot.learner.level(), slot.learner.snapshot()?)?;
    }
    let levels = config.levels();
    let (slots, rows, stats) = match config.mode {
        Mode::Deterministic => run_deterministic(config, task, budget, slots, &store, &levels)?,
        Mode::Concurrent => run_concurrent(config, task, budget, slots, &store, &levels)?,
    };
    let mut outcome = HarnessOutcome {
        report: TrainingReport::assemble(config, task, budget, checksum, rows, &slots, stats, &store),
        level0: None,
        level1: None,
        level2: None,
        flat: None,
        elapsed: started.elapsed(),
    };
    for slot in &slots {
        match slot.learner.snapshot()? {
            SnapshotPayload::Level0(a) => outcome.level0 = Some(a),
            SnapshotPayload::Level1(a) => outcome.level1 = Some(a),
            SnapshotPayload::Level2(a) => outcome.level2 = Some(a),
            SnapshotPayload::Flat(a) => outcome.flat = Some(a),
        }
    }
    Ok(outcome)
}

/// Counters gathered while running.
#[derive(Clone, Debug, Default)]
pub(crate) struct RunStats {
    pub emitted: [u64; LEVELS],
    pub backpressure: u64,
    pub actor_episodes: Vec<u64>,
    pub monotone: bool,
}

type RunResult = Result<(Vec<LearnerSlot>, Vec<EpisodeRow>, RunStats)>;

fn run_deterministic(
    config: &HarnessConfig,
    task: &TaskConfig,
    budget: u64,
    mut slots: Vec<LearnerSlot>,
    store: &ParameterStore,
    levels: &[usize],
) -> RunResult {
    let plan = deterministic_schedule(config, config.seed);
    let mut actors = (0..config.actors).map(|id| Actor::new(id, config, task)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut stats = RunStats { monotone: true, ..RunStats::default() };
    let mut steps = 0u64;
    'rounds: while steps < budget {
        for step in &plan {
            match *step {
                PlanStep::Episode { actor } => {
                    if steps >= budget {
                        break 'rounds;
                    }
                    let a = &mut actors[actor];
                    a.refresh(store, levels, config.fetch_period)?;
                    let (mut row, envelopes) = a.episode(config, steps)?;
                    steps += row.steps;
                    row.global_steps = steps;
                    rows.push(row);
                    for e in envelopes {
                        stats.emitted[e.level] += 1;
                        let slot = slots.iter_mut().find(|s| s.learner.level() == e.level);
                        match slot {
                            Some(s) => s.receive(e),
                            None => return Err(Error::UnknownLevel(e.level)),
                        }
                    }
                }
                PlanStep::Update { level, count } => {
                    let slot = slots.iter_mut().find(|s| s.learner.level() == level).ok_or(Error::UnknownLevel(level))?;
                    for _ in 0..count {
                        if !slot.update()? {
                            break;
                        }
                    }
                }
                PlanStep::Publish { level } => {
                    let slot = slots.iter().find(|s| s.learner.level() == level).ok_or(Error::UnknownLevel(level))?;
                    store.publish(level, slot.learner.snapshot()?)?;
                }
            }
        }
    }
    stats.actor_episodes = actors.iter().map(|a| a.episodes).collect();
    stats.monotone = actors.iter().all(|a| a.monotone);
    Ok((slots, rows, stats))
}

fn learner_loop(
    mut slot: LearnerSlot,
    rx: Receiver<TransitionEnvelope>,
    store: &ParameterStore,
    publish_period: u64,
    done: &AtomicBool,
) -> Result<LearnerSlot> {
    let level = slot.learner.level();
    let mut since_publish = 0;
    loop {
        // Every route happened before `done` was set, so a drain that starts
        // after seeing it is the last one needed.
        let finished = done.load(Ordering::Acquire);
        let mut got = false;
        while let Ok(e) = rx.try_recv() {
            slot.receive(e);
            got = true;
        }
        if finished {
            break;
        }
        let trained = slot.learner.can_train() && slot.update()?;
        if trained {
            since_publish += 1;
            if since_publish >= publish_period {
                store.publish(level, slot.learner.snapshot()?)?;
                since_publish = 0;
            }
        } else if !got {
            match rx.recv_timeout(Duration::from_millis(2)) {
                Ok(e) => {
                    slot.receive(e);
                    got = true;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        if got && level == 2 {
            store.publish(level, slot.learner.snapshot()?)?;
        }
    }
    store.publish(level, slot.learner.snapshot()?)?;
    Ok(slot)
}

fn run_concurrent(
    config: &HarnessConfig,
    task: &TaskConfig,
    budget: u64,
    slots: Vec<LearnerSlot>,
    store: &ParameterStore,
    levels: &[usize],
) -> RunResult {
    let (router, receivers) = Router::new(config.queue_capacity);
    let steps = AtomicU64::new(0);
    let done = AtomicBool::new(false);
    let rows = Mutex::new(Vec::new());
    let actors = (0..config.actors).map(|id| Actor::new(id, config, task)).collect::<Result<Vec<_>>>()?;

    std::thread::scope(|scope| -> RunResult {
        let mut learner_handles = Vec::new();
        let mut receivers: Vec<Option<Receiver<TransitionEnvelope>>> = receivers.into_iter().map(Some).collect();
        for slot in slots {
            let rx = receivers[slot.learner.level()].take().expect("one learner per level");
            let done = &done;
            learner_handles.push(scope.spawn(move || learner_loop(slot, rx, store, config.publish_period, done)));
        }
        // Queues of absent levels stay open but unread; nothing routes there.
        let actor_handles: Vec<_> = actors
            .into_iter()
            .map(|mut actor| {
                let (router, steps, rows) = (&router, &steps, &rows);
                scope.spawn(move || -> Result<Actor> {
                    loop {
                        let start = steps.load(Ordering::Acquire);
                        if start >= budget {
                            break;
                        }
                        actor.refresh(store, levels, config.fetch_period)?;
                        let (mut row, envelopes) = actor.episode(config, start)?;
                        row.global_steps = steps.fetch_add(row.steps, Ordering::AcqRel) + row.steps;
                        rows.lock().push(row);
                        for e in envelopes {
                            router.route(e)?;
                        }
                    }
                    Ok(actor)
                })
            })
            .collect();
        let mut finished = Vec::new();
        let mut first_err = None;
        for h in actor_handles {
            match h.join().expect("actor thread panicked") {
                Ok(a) => finished.push(a),
                Err(e) => first_err = first_err.or(Some(e)),
            }
        }
        done.store(true, Ordering::Release);
        let mut slots = Vec::new();
        for h in learner_handles {
            match h.join().expect("learner thread panicked") {
                Ok(s) => slots.push(s),
                Err(e) => first_err = first_err.or(Some(e)),
            }
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        let mut rows = std::mem::take(&mut *rows.lock());
        rows.sort_by_key(|r: &EpisodeRow| (r.actor, r.actor_episode));
        finished.sort_by_key(|a| a.id);
        let stats = RunStats {
            emitted: router.sent(),
            backpressure: router.backpressure(),
            actor_episodes: finished.iter().map(|a| a.episodes).collect(),
            monotone: finished.iter().all(|a| a.monotone),
        };
        Ok((slots, rows, stats))
    })
}
