//! Toy task suite. Each task isolates one gesture class and one reward
//! regime:
//!
//! | task            | gesture | rewards          | regime |
//! |-----------------|---------|------------------|--------|
//! | `catch`         | tap     | -1, 0, +1        | dense  |
//! | `button_sparse` | tap     | 0, +1            | sparse |
//! | `swipe_path`    | swipe   | 0, +1            | sparse |
//! | `tile_fling`    | fling   | merged values    | dense  |
//! | `dodge_lane`    | tap     | 0, +0.1          | dense  |
//! | `gesture_pad`   | any     | 0                | none   |
//!
//! Rendering: channel 0 holds static layout, channel 1 dynamic objects and
//! channel 2 the agent or highlighted targets.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Outcome, ScreenImage, Task, PIXEL_MID, PIXEL_ON};
use crate::error::{Error, Result};
use crate::gesture::{Cell, Direction, GestureClass, GestureGoal, GridGeometry};

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDescriptor {
    pub name: &'static str,
    pub default_geometry: GridGeometry,
    pub episode_limit: u64,
    /// Inclusive bounds on any per-step reward at zero latency.
    pub reward_range: (f64, f64),
    /// The exact per-step reward set, for tasks with finitely many.
    pub reward_values: Option<Vec<f64>>,
    /// Class whose completion is required for a nonzero reward, if any.
    pub gated_by: Option<GestureClass>,
    pub sparse: bool,
}

fn geo(rows: usize, cols: usize) -> GridGeometry {
    GridGeometry::new(rows, cols).expect("static geometry")
}

pub fn task_suite() -> Vec<TaskDescriptor> {
    vec![
        TaskDescriptor {
            name: "catch",
            default_geometry: geo(5, 3),
            episode_limit: 200,
            reward_range: (-1.0, 1.0),
            reward_values: Some(vec![-1.0, 0.0, 1.0]),
            gated_by: None,
            sparse: false,
        },
        TaskDescriptor {
            name: "button_sparse",
            default_geometry: geo(9, 6),
            episode_limit: 300,
            reward_range: (0.0, 1.0),
            reward_values: Some(vec![0.0, 1.0]),
            gated_by: Some(GestureClass::Tap),
            sparse: true,
        },
        TaskDescriptor {
            name: "swipe_path",
            default_geometry: geo(9, 6),
            episode_limit: 300,
            reward_range: (0.0, 1.0),
            reward_values: Some(vec![0.0, 1.0]),
            gated_by: Some(GestureClass::Swipe),
            sparse: true,
        },
        TaskDescriptor {
            name: "tile_fling",
            default_geometry: geo(9, 6),
            episode_limit: 500,
            // merges on a 4x4 board: at most 8 merges of tiles below 2^17
            reward_range: (0.0, 8.0 * 131072.0),
            reward_values: None,
            gated_by: Some(GestureClass::Fling),
            sparse: false,
        },
        TaskDescriptor {
            name: "dodge_lane",
            default_geometry: geo(6, 3),
            episode_limit: 500,
            reward_range: (0.0, 0.1),
            reward_values: Some(vec![0.0, 0.1]),
            gated_by: None,
            sparse: false,
        },
        TaskDescriptor {
            name: "gesture_pad",
            default_geometry: geo(9, 6),
            episode_limit: 1_000_000,
            reward_range: (0.0, 0.0),
            reward_values: Some(vec![0.0]),
            gated_by: None,
            sparse: true,
        },
    ]
}

fn unsupported(task: &str, g: &GridGeometry, reason: &str) -> Error {
    Error::UnsupportedGeometry {
        task: task.to_string(),
        rows: g.rows(),
        cols: g.cols(),
        reason: reason.to_string(),
    }
}

pub(crate) fn build(name: &str, g: &GridGeometry) -> Result<Box<dyn Task>> {
    match name {
        "catch" => {
            if g.rows() < 2 || g.cols() < 2 {
                return Err(unsupported(name, g, "needs at least 2 rows and 2 columns"));
            }
            Ok(Box::new(Catch::new(*g)))
        }
        "button_sparse" => {
            if g.n_cells() < 2 {
                return Err(unsupported(name, g, "needs at least 2 cells"));
            }
            Ok(Box::new(ButtonSparse { geometry: *g, target: Cell(0) }))
        }
        "swipe_path" => {
            if g.n_cells() < 2 {
                return Err(unsupported(name, g, "needs at least 2 cells"));
            }
            Ok(Box::new(SwipePath { geometry: *g, start: Cell(0), end: Cell(1) }))
        }
        "tile_fling" => {
            if g.rows() < BOARD || g.cols() < BOARD {
                return Err(unsupported(name, g, "needs room for the 4x4 board"));
            }
            Ok(Box::new(TileFling { board: [[0; BOARD]; BOARD], stuck: false }))
        }
        "dodge_lane" => {
            if g.cols() != LANES || g.rows() < 3 {
                return Err(unsupported(name, g, "needs exactly 3 columns and at least 3 rows"));
            }
            Ok(Box::new(DodgeLane { geometry: *g, lane: 1, hazards: Vec::new() }))
        }
        "gesture_pad" => Ok(Box::new(GesturePad)),
        other => Err(Error::UnknownTask(other.to_string())),
    }
}

fn completed_taps(completed: &BTreeSet<GestureGoal>) -> impl Iterator<Item = Cell> + '_ {
    completed.iter().filter_map(|g| match g {
        GestureGoal::Tap(c) => Some(*c),
        _ => None,
    })
}

/// An object falls one row per tick down a random column. When it sits on
/// the bottom row the fall resolves: +1 if the last tap completed during the
/// fall was in the object's column, -1 otherwise (including no tap).
struct Catch {
    geometry: GridGeometry,
    row: usize,
    col: usize,
    tapped_col: Option<usize>,
    falls: u32,
}

impl Catch {
    fn new(geometry: GridGeometry) -> Self {
        Self { geometry, row: 0, col: 0, tapped_col: None, falls: 0 }
    }

    fn spawn(&mut self, rng: &mut ChaCha8Rng) {
        self.row = 0;
        self.col = rng.gen_range(0..self.geometry.cols());
        self.tapped_col = None;
    }
}

impl Task for Catch {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.falls = 0;
        self.spawn(rng);
    }

    fn on_gestures(&mut self, completed: &BTreeSet<GestureGoal>, _rng: &mut ChaCha8Rng) -> Outcome {
        if let Some(c) = completed_taps(completed).last() {
            self.tapped_col = Some(self.geometry.coords(c).1);
        }
        Outcome::default()
    }

    fn tick(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        if self.row + 1 < self.geometry.rows() {
            self.row += 1;
            return Outcome::default();
        }
        let reward = if self.tapped_col == Some(self.col) { 1.0 } else { -1.0 };
        self.falls += 1;
        self.spawn(rng);
        Outcome { reward, done: false }
    }

    fn render(&self, image: &mut ScreenImage) {
        let bottom = self.geometry.rows() - 1;
        for c in 0..self.geometry.cols() {
            image.set(bottom, c, 0, PIXEL_MID);
        }
        image.set(self.row, self.col, 1, PIXEL_ON);
        if let Some(c) = self.tapped_col {
            image.set(bottom, c, 2, PIXEL_ON);
        }
    }

    fn scored_events(&self) -> u32 {
        self.falls
    }
}

/// One highlighted cell; a tap on it ends the episode with +1.
struct ButtonSparse {
    geometry: GridGeometry,
    target: Cell,
}

impl Task for ButtonSparse {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.target = Cell(rng.gen_range(0..self.geometry.n_cells()));
    }

    fn on_gestures(&mut self, completed: &BTreeSet<GestureGoal>, _rng: &mut ChaCha8Rng) -> Outcome {
        if completed.contains(&GestureGoal::Tap(self.target)) {
            Outcome { reward: 1.0, done: true }
        } else {
            Outcome::default()
        }
    }

    fn tick(&mut self, _rng: &mut ChaCha8Rng) -> Outcome {
        Outcome::default()
    }

    fn render(&self, image: &mut ScreenImage) {
        let (r, c) = self.geometry.coords(self.target);
        image.set(r, c, 2, PIXEL_ON);
    }
}

/// Start marked on channel 1, end on channel 2; the marked swipe pays +1.
struct SwipePath {
    geometry: GridGeometry,
    start: Cell,
    end: Cell,
}

impl Task for SwipePath {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.geometry.n_cells();
        self.start = Cell(rng.gen_range(0..n));
        // uniform over the other n - 1 cells
        let offset = rng.gen_range(1..n);
        self.end = Cell((self.start.0 + offset) % n);
    }

    fn on_gestures(&mut self, completed: &BTreeSet<GestureGoal>, _rng: &mut ChaCha8Rng) -> Outcome {
        if completed.contains(&GestureGoal::Swipe { start: self.start, end: self.end }) {
            Outcome { reward: 1.0, done: true }
        } else {
            Outcome::default()
        }
    }

    fn tick(&mut self, _rng: &mut ChaCha8Rng) -> Outcome {
        Outcome::default()
    }

    fn render(&self, image: &mut ScreenImage) {
        let (r, c) = self.geometry.coords(self.start);
        image.set(r, c, 1, PIXEL_ON);
        let (r, c) = self.geometry.coords(self.end);
        image.set(r, c, 2, PIXEL_ON);
    }
}

const BOARD: usize = 4;

/// A 4x4 sliding-tile board in the top-left corner of the grid.
///
/// An axis-aligned fling slides every tile that way, merging equal
/// neighbours once per move; the reward is the sum of merged values.
/// Diagonal flings do nothing. Tiles render on channel 1 (present), with
/// channel 2 at mid for 4 and full for 8 or more.
struct TileFling {
    board: [[u32; BOARD]; BOARD],
    stuck: bool,
}

impl TileFling {
    fn spawn(&mut self, rng: &mut ChaCha8Rng) {
        let empty: Vec<(usize, usize)> = (0..BOARD)
            .flat_map(|r| (0..BOARD).map(move |c| (r, c)))
            .filter(|&(r, c)| self.board[r][c] == 0)
            .collect();
        if empty.is_empty() {
            return;
        }
        let (r, c) = empty[rng.gen_range(0..empty.len())];
        self.board[r][c] = if rng.gen_bool(0.9) { 2 } else { 4 };
    }

    /// Slide one line toward index 0. Returns (new line, merged sum).
    fn slide(line: [u32; BOARD]) -> ([u32; BOARD], u32) {
        let tiles: Vec<u32> = line.iter().copied().filter(|&v| v != 0).collect();
        let mut out = [0u32; BOARD];
        let mut merged = 0;
        let (mut i, mut k) = (0, 0);
        while i < tiles.len() {
            if i + 1 < tiles.len() && tiles[i] == tiles[i + 1] {
                out[k] = tiles[i] * 2;
                merged += out[k];
                i += 2;
            } else {
                out[k] = tiles[i];
                i += 1;
            }
            k += 1;
        }
        (out, merged)
    }

    /// Applies a move; returns the merged sum, or `None` when nothing moved.
    fn shift(board: &mut [[u32; BOARD]; BOARD], dir: Direction) -> Option<u32> {
        // coordinates of line `l`, position `p` (p = 0 is the leading edge)
        let at = |l: usize, p: usize| -> (usize, usize) {
            match dir {
                Direction::N => (p, l),
                Direction::S => (BOARD - 1 - p, l),
                Direction::W => (l, p),
                Direction::E => (l, BOARD - 1 - p),
                _ => unreachable!("diagonals filtered by caller"),
            }
        };
        let before = *board;
        let mut total = 0;
        for l in 0..BOARD {
            let mut line = [0; BOARD];
            for (p, v) in line.iter_mut().enumerate() {
                let (r, c) = at(l, p);
                *v = board[r][c];
            }
            let (slid, merged) = Self::slide(line);
            total += merged;
            for (p, v) in slid.iter().enumerate() {
                let (r, c) = at(l, p);
                board[r][c] = *v;
            }
        }
        (before != *board).then_some(total)
    }

    fn can_move(&self) -> bool {
        [Direction::N, Direction::E, Direction::S, Direction::W]
            .into_iter()
            .any(|d| Self::shift(&mut self.board.clone(), d).is_some())
    }
}

impl Task for TileFling {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.board = [[0; BOARD]; BOARD];
        self.stuck = false;
        self.spawn(rng);
        self.spawn(rng);
    }

    fn on_gestures(&mut self, completed: &BTreeSet<GestureGoal>, rng: &mut ChaCha8Rng) -> Outcome {
        let dir = completed.iter().find_map(|g| match g {
            GestureGoal::Fling(d) => Some(*d),
            _ => None,
        });
        let Some(dir) = dir else { return Outcome::default() };
        if !matches!(dir, Direction::N | Direction::E | Direction::S | Direction::W) {
            return Outcome::default();
        }
        match Self::shift(&mut self.board, dir) {
            Some(merged) => {
                self.spawn(rng);
                self.stuck = !self.can_move();
                Outcome { reward: f64::from(merged), done: self.stuck }
            }
            None => Outcome::default(),
        }
    }

    fn tick(&mut self, _rng: &mut ChaCha8Rng) -> Outcome {
        Outcome { reward: 0.0, done: self.stuck }
    }

    fn render(&self, image: &mut ScreenImage) {
        for r in 0..BOARD {
            for c in 0..BOARD {
                image.set(r, c, 0, PIXEL_MID);
                let v = self.board[r][c];
                if v > 0 {
                    image.set(r, c, 1, PIXEL_ON);
                    match v {
                        4 => image.set(r, c, 2, PIXEL_MID),
                        v if v >= 8 => image.set(r, c, 2, PIXEL_ON),
                        _ => {}
                    }
                }
            }
        }
    }
}

const LANES: usize = 3;
const HAZARD_RATE: f64 = 0.3;

/// The agent rides the bottom row in one of three lanes; a tap anywhere in
/// a column moves it to that lane. Hazards spawn on the top row and descend
/// one row per tick. Every survived tick pays 0.1; a hazard reaching the
/// agent's cell ends the episode.
struct DodgeLane {
    geometry: GridGeometry,
    lane: usize,
    hazards: Vec<(usize, usize)>,
}

impl Task for DodgeLane {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) {
        self.lane = 1;
        self.hazards.clear();
    }

    fn on_gestures(&mut self, completed: &BTreeSet<GestureGoal>, _rng: &mut ChaCha8Rng) -> Outcome {
        if let Some(c) = completed_taps(completed).last() {
            self.lane = self.geometry.coords(c).1;
        }
        Outcome::default()
    }

    fn tick(&mut self, rng: &mut ChaCha8Rng) -> Outcome {
        let bottom = self.geometry.rows() - 1;
        for h in &mut self.hazards {
            h.0 += 1;
        }
        self.hazards.retain(|h| h.0 <= bottom);
        if self.hazards.iter().any(|&(r, l)| r == bottom && l == self.lane) {
            return Outcome { reward: 0.0, done: true };
        }
        if rng.gen_bool(HAZARD_RATE) {
            self.hazards.push((0, rng.gen_range(0..LANES)));
        }
        Outcome { reward: 0.1, done: false }
    }

    fn render(&self, image: &mut ScreenImage) {
        let bottom = self.geometry.rows() - 1;
        for r in 0..self.geometry.rows() {
            for c in 0..LANES {
                image.set(r, c, 0, if r == bottom { PIXEL_MID } else { 0 });
            }
        }
        for &(r, l) in &self.hazards {
            image.set(r, l, 1, PIXEL_ON);
        }
        image.set(bottom, self.lane, 2, PIXEL_ON);
    }
}

/// Reward-free touch surface used for gesture pretraining.
struct GesturePad;

impl Task for GesturePad {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) {}

    fn on_gestures(&mut self, _completed: &BTreeSet<GestureGoal>, _rng: &mut ChaCha8Rng) -> Outcome {
        Outcome::default()
    }

    fn tick(&mut self, _rng: &mut ChaCha8Rng) -> Outcome {
        Outcome::default()
    }

    fn render(&self, _image: &mut ScreenImage) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slide_merges_once_per_pair() {
        assert_eq!(TileFling::slide([2, 2, 2, 2]), ([4, 4, 0, 0], 8));
        assert_eq!(TileFling::slide([0, 2, 0, 2]), ([4, 0, 0, 0], 4));
        assert_eq!(TileFling::slide([4, 2, 2, 0]), ([4, 4, 0, 0], 4));
        assert_eq!(TileFling::slide([2, 4, 8, 16]), ([2, 4, 8, 16], 0));
    }

    #[test]
    fn shift_east_moves_tiles_right() {
        let mut b = [[0; BOARD]; BOARD];
        b[0] = [2, 2, 0, 4];
        assert_eq!(TileFling::shift(&mut b, Direction::E), Some(4));
        assert_eq!(b[0], [0, 0, 4, 4]);
        assert_eq!(TileFling::shift(&mut b, Direction::N), None);
        let mut c = [[0; BOARD]; BOARD];
        c[3][1] = 2;
        assert_eq!(TileFling::shift(&mut c, Direction::N), Some(0));
        assert_eq!(c[0][1], 2);
    }
}
