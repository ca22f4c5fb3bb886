//! Level 0: goal-conditioned gesture execution.
//!
//! One approximator per gesture class maps
//! `one-hot(goal parameters) ++ one-hot(stroke start or none) ++
//! one-hot(last touch or lifted)` to values for all `2 x cells` primitive
//! actions. The stroke start keeps the input Markov for swipes and flings:
//! the last touch alone cannot tell a stroke that began at the goal's start
//! cell from one that began anywhere else.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::PrimitiveAction;
use crate::error::{Error, Result};
use crate::gesture::{
    goal_ordering_checksum, Cell, GestureClass, GestureGoal, GridGeometry, TouchHistory, DEFAULT_BASE_DISCOUNT,
};
use crate::value::{
    load_approximators, save_approximators, FeatureLayout, FeatureVector, GoalEncoder, Mlp, QApproximator,
    QLearner, RelabeledTransition, ReplayBuffer, TdConfig, DEFAULT_RELABEL_BUDGET,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Table,
    Network,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level0Config {
    pub backend: BackendKind,
    pub hidden: Vec<usize>,
    pub td: TdConfig,
    pub replay_capacity: usize,
    pub relabel_budget: usize,
    pub base_discount: f64,
}

impl Default for Level0Config {
    fn default() -> Self {
        Self {
            backend: BackendKind::Table,
            hidden: vec![128],
            td: TdConfig::table_default(),
            replay_capacity: 100_000,
            relabel_budget: DEFAULT_RELABEL_BUDGET,
            base_discount: DEFAULT_BASE_DISCOUNT,
        }
    }
}

/// Builds level-0 inputs for one grid.
#[derive(Clone, Debug)]
pub struct LevelZeroEncoder {
    geometry: GridGeometry,
    base_discount: f64,
    layouts: [Arc<FeatureLayout>; 3],
    mask: Arc<[bool]>,
}

impl LevelZeroEncoder {
    pub fn new(geometry: GridGeometry, base_discount: f64) -> Self {
        let n = geometry.n_cells();
        let last = |l: FeatureLayout| Arc::new(l.one_hot("stroke_start", n + 1).one_hot("last_touch", n + 1));
        let layouts = [
            last(FeatureLayout::new().one_hot("tap_cell", n)),
            last(FeatureLayout::new().one_hot("swipe_start", n).one_hot("swipe_end", n)),
            last(FeatureLayout::new().one_hot("fling_direction", 8)),
        ];
        Self { geometry, base_discount, layouts, mask: vec![true; 2 * n].into() }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn layout(&self, class: GestureClass) -> &Arc<FeatureLayout> {
        &self.layouts[class.index()]
    }

    pub fn n_actions(&self) -> usize {
        2 * self.geometry.n_cells()
    }

    pub fn encode_state(&self, goal: &GestureGoal, stroke_start: Option<Cell>, last_touch: Option<Cell>) -> FeatureVector {
        let none = self.geometry.n_cells();
        let first = stroke_start.map_or(none, |c| c.0);
        let slot = last_touch.map_or(none, |c| c.0);
        let layout = self.layout(goal.class());
        match *goal {
            GestureGoal::Tap(c) => layout.encode(&[c.0, first, slot], &[]),
            GestureGoal::Swipe { start, end } => layout.encode(&[start.0, end.0, first, slot], &[]),
            GestureGoal::Fling(d) => layout.encode(&[d.index(), first, slot], &[]),
        }
    }
}

impl GoalEncoder for LevelZeroEncoder {
    fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    fn base_discount(&self) -> f64 {
        self.base_discount
    }

    fn encode(&self, goal: &GestureGoal, history: &TouchHistory) -> FeatureVector {
        self.encode_state(goal, history.stroke_start(), history.last_touch())
    }

    fn action_mask(&self, _goal: &GestureGoal) -> Arc<[bool]> {
        Arc::clone(&self.mask)
    }
}

/// Anything that scores primitive actions for a gesture goal.
pub trait GesturePolicy {
    fn encoder(&self) -> &LevelZeroEncoder;
    fn gesture_q(&self, goal: &GestureGoal, history: &TouchHistory) -> Vec<f64>;
}

/// Read-only level-0 policy: three independent approximators.
#[derive(Clone, Debug)]
pub struct LevelZeroAgent {
    encoder: LevelZeroEncoder,
    nets: [QApproximator; 3],
}

impl LevelZeroAgent {
    pub fn new(geometry: GridGeometry, config: &Level0Config, rng: &mut ChaCha8Rng) -> Result<Self> {
        let encoder = LevelZeroEncoder::new(geometry, config.base_discount);
        let n_out = encoder.n_actions();
        let build = |class: GestureClass, rng: &mut ChaCha8Rng| -> Result<QApproximator> {
            let layout = encoder.layout(class);
            match config.backend {
                BackendKind::Table => QApproximator::table(layout, n_out),
                BackendKind::Network => {
                    let mut sizes = vec![layout.len()];
                    sizes.extend(&config.hidden);
                    sizes.push(n_out);
                    Ok(QApproximator::network(Mlp::new(&sizes, rng)))
                }
            }
        };
        let nets = [build(GestureClass::Tap, rng)?, build(GestureClass::Swipe, rng)?, build(GestureClass::Fling, rng)?];
        Ok(Self { encoder, nets })
    }

    pub fn from_parts(encoder: LevelZeroEncoder, nets: [QApproximator; 3]) -> Result<Self> {
        for class in GestureClass::ALL {
            let q = &nets[class.index()];
            let expected = encoder.layout(class).len();
            if q.input_size() != expected {
                return Err(Error::SizeMismatch { expected, got: q.input_size() });
            }
            if q.output_size() != encoder.n_actions() {
                return Err(Error::SizeMismatch { expected: encoder.n_actions(), got: q.output_size() });
            }
        }
        Ok(Self { encoder, nets })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.encoder.geometry
    }

    pub fn net(&self, class: GestureClass) -> &QApproximator {
        &self.nets[class.index()]
    }

    pub fn nets(&self) -> &[QApproximator; 3] {
        &self.nets
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let checksum = goal_ordering_checksum(self.geometry());
        save_approximators(file, checksum, &[&self.nets[0], &self.nets[1], &self.nets[2]])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let checksum = goal_ordering_checksum(self.geometry());
        save_approximators(&mut buf, checksum, &[&self.nets[0], &self.nets[1], &self.nets[2]])?;
        Ok(buf)
    }

    /// Loads a parameter file written for `geometry`; a file for any other
    /// grid fails the goal-ordering checksum.
    pub fn load(path: &Path, geometry: GridGeometry, base_discount: f64) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load_from(file, geometry, base_discount)
    }

    pub fn load_from<R: std::io::Read>(reader: R, geometry: GridGeometry, base_discount: f64) -> Result<Self> {
        let nets = load_approximators(reader, goal_ordering_checksum(&geometry))?;
        let nets: [QApproximator; 3] =
            nets.try_into().map_err(|v: Vec<_>| Error::Format(format!("expected 3 approximators, found {}", v.len())))?;
        Self::from_parts(LevelZeroEncoder::new(geometry, base_discount), nets)
    }
}

impl GesturePolicy for LevelZeroAgent {
    fn encoder(&self) -> &LevelZeroEncoder {
        &self.encoder
    }

    fn gesture_q(&self, goal: &GestureGoal, history: &TouchHistory) -> Vec<f64> {
        let f = self.encoder.encode(goal, history);
        self.nets[goal.class().index()].q_values(&f).expect("encoder matches approximator")
    }
}

/// Trains the three level-0 approximators from relabeled transitions.
#[derive(Debug)]
pub struct LevelZeroLearner {
    encoder: LevelZeroEncoder,
    learners: [QLearner; 3],
    replays: [ReplayBuffer<crate::value::Transition>; 3],
    config: Level0Config,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
}

impl LevelZeroLearner {
    pub fn new(agent: LevelZeroAgent, config: Level0Config) -> Self {
        let LevelZeroAgent { encoder, nets } = agent;
        let [tap, swipe, fling] = nets;
        let td = config.td;
        Self {
            encoder,
            learners: [QLearner::new(tap, td), QLearner::new(swipe, td), QLearner::new(fling, td)],
            replays: std::array::from_fn(|_| ReplayBuffer::new(config.replay_capacity)),
            rng: ChaCha8Rng::seed_from_u64(td.seed ^ 0x1e7e_1000),
            config,
            losses: Vec::new(),
        }
    }

    pub fn config(&self) -> &Level0Config {
        &self.config
    }

    pub fn ingest(&mut self, items: impl IntoIterator<Item = RelabeledTransition>) {
        for r in items {
            self.replays[r.goal.class().index()].push(r.transition);
        }
    }

    pub fn stored(&self) -> u64 {
        self.replays.iter().map(|r| r.inserted()).sum()
    }

    pub fn replay_len(&self, class: GestureClass) -> usize {
        self.replays[class.index()].len()
    }

    /// One update for each class with a full batch available. Returns the
    /// mean loss over the classes updated, if any.
    pub fn train_step(&mut self) -> Result<Option<f64>> {
        let batch = self.config.td.batch_size;
        let mut total = 0.0;
        let mut n = 0;
        for k in 0..3 {
            if self.replays[k].len() >= batch {
                let sample = self.replays[k].sample(batch, &mut self.rng);
                total += self.learners[k].update(&sample)?;
                n += 1;
            }
        }
        if n == 0 {
            return Ok(None);
        }
        let loss = total / n as f64;
        self.losses.push(loss);
        Ok(Some(loss))
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn snapshot(&self) -> LevelZeroAgent {
        LevelZeroAgent {
            encoder: self.encoder.clone(),
            nets: std::array::from_fn(|k| self.learners[k].online.clone()),
        }
    }
}

impl GesturePolicy for LevelZeroLearner {
    fn encoder(&self) -> &LevelZeroEncoder {
        &self.encoder
    }

    fn gesture_q(&self, goal: &GestureGoal, history: &TouchHistory) -> Vec<f64> {
        let f = self.encoder.encode(goal, history);
        self.learners[goal.class().index()].online.q_values(&f).expect("encoder matches approximator")
    }
}

/// Index of `action` in the level-0 output.
pub fn action_index(geometry: &GridGeometry, action: &PrimitiveAction) -> usize {
    action.index(geometry)
}
