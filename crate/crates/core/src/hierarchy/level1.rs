//! Level 1: choosing a gesture goal of the commanded class from pixels.
//!
//! Output is two heads of width `n + n + 8` laid out as
//! `[tap cell | swipe start/end cell | fling direction]`. Head 1 picks the
//! first parameter; head 2 is only read and trained for swipes.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::options::{OptionExecution, Termination};
use crate::env::{AuxObservation, EnvStep, ScreenImage};
use crate::error::{Error, Result};
use crate::gesture::{Cell, Direction, GestureClass, GestureGoal, GridGeometry};
use crate::value::{epsilon_greedy, FeatureLayout, FeatureVector, Mlp, QApproximator, TdConfig, Transition};

pub const DEFAULT_GAMMA_ENV: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level1Config {
    pub hidden: Vec<usize>,
    pub td: TdConfig,
    pub replay_capacity: usize,
    pub gamma_env: f64,
}

impl Default for Level1Config {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            td: TdConfig::network_default(),
            replay_capacity: 50_000,
            gamma_env: DEFAULT_GAMMA_ENV,
        }
    }
}

/// Observation features shared by level 1 and the flat baseline:
/// `image / 255 ++ one-hot(last touch or lifted) ++ completed flags`.
#[derive(Clone, Debug)]
pub struct ObservationEncoder {
    geometry: GridGeometry,
    layout: Arc<FeatureLayout>,
}

impl ObservationEncoder {
    pub fn new(geometry: GridGeometry) -> Self {
        let n = geometry.n_cells();
        let layout = FeatureLayout::new()
            .dense("image", n * crate::env::CHANNELS)
            .one_hot("last_touch", n + 1)
            .dense("completed", 3);
        Self { geometry, layout: Arc::new(layout) }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn encode(&self, image: &ScreenImage, aux: &AuxObservation) -> FeatureVector {
        let pixels: Vec<f64> = image.values.iter().map(|&v| f64::from(v) / 255.0).collect();
        let flags = aux.completed_flags.map(|f| if f { 1.0 } else { 0.0 });
        self.layout.encode(&[aux.last_touch_slot()], &[&pixels, &flags])
    }

    pub fn encode_step(&self, step: &EnvStep) -> FeatureVector {
        self.encode(&step.image, &step.aux)
    }
}

/// Column layout and masks of the two-head selector.
#[derive(Clone, Debug)]
pub struct HeadLayout {
    n: usize,
    selection: [Arc<[bool]>; 3],
    bootstrap: [Arc<[bool]>; 3],
}

impl HeadLayout {
    pub fn new(geometry: &GridGeometry) -> Self {
        let n = geometry.n_cells();
        let width = 2 * n + 8;
        let build = |heads: &[usize], class: GestureClass| -> Arc<[bool]> {
            let mut m = vec![false; 2 * width];
            let slice = Self::slice_for(n, class);
            for &h in heads {
                m[h * width + slice.start..h * width + slice.end].iter_mut().for_each(|x| *x = true);
            }
            m.into()
        };
        let selection = GestureClass::ALL.map(|c| build(&[0, 1], c));
        let bootstrap = GestureClass::ALL.map(|c| match c {
            GestureClass::Swipe => build(&[0, 1], c),
            _ => build(&[0], c),
        });
        Self { n, selection, bootstrap }
    }

    fn slice_for(n: usize, class: GestureClass) -> Range<usize> {
        match class {
            GestureClass::Tap => 0..n,
            GestureClass::Swipe => n..2 * n,
            GestureClass::Fling => 2 * n..2 * n + 8,
        }
    }

    pub fn head_width(&self) -> usize {
        2 * self.n + 8
    }

    /// Columns of `class` within one head.
    pub fn slice(&self, class: GestureClass) -> Range<usize> {
        Self::slice_for(self.n, class)
    }

    /// The class slice in both heads; nothing outside it is ever read.
    pub fn selection_mask(&self, class: GestureClass) -> &Arc<[bool]> {
        &self.selection[class.index()]
    }

    /// The entries that carry trained values for `class`.
    pub fn bootstrap_mask(&self, class: GestureClass) -> &Arc<[bool]> {
        &self.bootstrap[class.index()]
    }

    /// Output indices trained for `goal`.
    pub fn goal_actions(&self, goal: &GestureGoal) -> Vec<usize> {
        let w = self.head_width();
        let n = self.n;
        match *goal {
            GestureGoal::Tap(c) => vec![c.0],
            GestureGoal::Swipe { start, end } => vec![n + start.0, w + n + end.0],
            GestureGoal::Fling(d) => vec![2 * n + d.index()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalSelection {
    pub goal: GestureGoal,
    pub actions: Vec<usize>,
}

/// Epsilon-greedy goal selection from a full two-head value vector.
pub fn select_from_q<R: Rng + ?Sized>(
    heads: &HeadLayout,
    q: &[f64],
    class: GestureClass,
    epsilon: f64,
    rng: &mut R,
) -> Result<GoalSelection> {
    let w = heads.head_width();
    if q.len() != 2 * w {
        return Err(Error::SizeMismatch { expected: 2 * w, got: q.len() });
    }
    let mask = heads.selection_mask(class);
    let slice = heads.slice(class);
    let p1 = epsilon_greedy(&q[..w], &mask[..w], epsilon, rng)? - slice.start;
    let goal = match class {
        GestureClass::Tap => GestureGoal::Tap(Cell(p1)),
        GestureClass::Fling => GestureGoal::Fling(Direction::from_index(p1).expect("fling slice has eight columns")),
        GestureClass::Swipe => {
            let p2 = epsilon_greedy(&q[w..], &mask[w..], epsilon, rng)? - slice.start;
            GestureGoal::Swipe { start: Cell(p1), end: Cell(p2) }
        }
    };
    Ok(GoalSelection { actions: heads.goal_actions(&goal), goal })
}

#[derive(Clone, Debug)]
pub struct LevelOneAgent {
    encoder: ObservationEncoder,
    heads: HeadLayout,
    q: QApproximator,
}

impl LevelOneAgent {
    pub fn new(geometry: GridGeometry, config: &Level1Config, rng: &mut ChaCha8Rng) -> Self {
        let encoder = ObservationEncoder::new(geometry);
        let heads = HeadLayout::new(&geometry);
        let mut sizes = vec![encoder.layout().len()];
        sizes.extend(&config.hidden);
        sizes.push(2 * heads.head_width());
        let q = QApproximator::network(Mlp::new(&sizes, rng)).with_heads(2);
        Self { encoder, heads, q }
    }

    pub fn from_parts(geometry: GridGeometry, q: QApproximator) -> Result<Self> {
        let encoder = ObservationEncoder::new(geometry);
        let heads = HeadLayout::new(&geometry);
        if q.input_size() != encoder.layout().len() {
            return Err(Error::SizeMismatch { expected: encoder.layout().len(), got: q.input_size() });
        }
        if q.output_size() != 2 * heads.head_width() || q.heads() != 2 {
            return Err(Error::SizeMismatch { expected: 2 * heads.head_width(), got: q.output_size() });
        }
        Ok(Self { encoder, heads, q })
    }

    pub fn encoder(&self) -> &ObservationEncoder {
        &self.encoder
    }

    pub fn heads(&self) -> &HeadLayout {
        &self.heads
    }

    pub fn approximator(&self) -> &QApproximator {
        &self.q
    }

    pub fn q_values(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        self.q.q_values(features)
    }

    pub fn select_gvf<R: Rng + ?Sized>(
        &self,
        image: &ScreenImage,
        aux: &AuxObservation,
        class: GestureClass,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<GoalSelection> {
        let q = self.q.q_values(&self.encoder.encode(image, aux))?;
        select_from_q(&self.heads, &q, class, epsilon, rng)
    }
}

/// `gamma^k` by repeated multiplication, so every caller gets the same bits.
pub fn discount_power(gamma: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * gamma)
}

/// SMDP transition for one option: the cumulant is the undiscounted reward
/// collected while it ran and the continuation `gamma_env^k`, zero at
/// episode end. `next_class` is the class level 1 will serve next.
pub fn level1_transition(
    agent: &LevelOneAgent,
    obs_before: &EnvStep,
    goal: &GestureGoal,
    option: &OptionExecution,
    next_class: GestureClass,
    gamma_env: f64,
) -> Result<Transition> {
    if option.steps == 0 {
        return Err(Error::InvalidConfig("option took no steps".into()));
    }
    let after = &option.final_step;
    let ended = after.episode_end || option.termination == Termination::EpisodeEnd;
    Ok(Transition {
        features: agent.encoder.encode_step(obs_before),
        actions: agent.heads.goal_actions(goal),
        cumulant: option.reward,
        continuation: if ended { 0.0 } else { discount_power(gamma_env, option.steps) },
        next_features: agent.encoder.encode_step(after),
        next_action_mask: Arc::clone(agent.heads.bootstrap_mask(next_class)),
    })
}
