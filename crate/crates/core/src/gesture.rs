//! Touch geometry and the gesture grammar.
//!
//! Every gesture is a binary cumulant over the touch history: a symbol
//! sequence in which each entry is either a finger position on the grid or a
//! lift. A gesture completes on the step whose final symbol is a lift that
//! closes a single uninterrupted stroke:
//!
//! ```text
//!   ... LIFT, TOUCH(start), TOUCH(..), ..., TOUCH(end), LIFT
//!       ^ i                                             ^ t
//! ```
//!
//! * `swipe(start, end)` completes on any such stroke.
//! * `tap(c)` completes only on the one-frame stroke `LIFT, TOUCH(c), LIFT`.
//! * `fling(d)` completes on a stroke with `start != end` whose displacement
//!   quantizes to compass direction `d`.
//!
//! A one-frame stroke on `c` completes both `tap(c)` and the degenerate
//! `swipe(c, c)`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default geometric discount applied inside every gesture continuation.
pub const DEFAULT_BASE_DISCOUNT: f64 = 0.99;

/// Default number of primitive steps an option may run before timing out.
pub const DEFAULT_OPTION_TIMEOUT: usize = 10;

/// Index of a grid cell, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell(pub usize);

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Discretized touchscreen. Row 0 is the top of the screen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridGeometry {
    rows: usize,
    cols: usize,
}

impl GridGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGeometry { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Panics if `(row, col)` lies outside the grid.
    pub fn cell(&self, row: usize, col: usize) -> Cell {
        assert!(row < self.rows && col < self.cols, "({row}, {col}) outside {self}");
        Cell(row * self.cols + col)
    }

    pub fn coords(&self, cell: Cell) -> (usize, usize) {
        (cell.0 / self.cols, cell.0 % self.cols)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.n_cells()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        (0..self.n_cells()).map(Cell)
    }
}

impl fmt::Display for GridGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// One entry of the touch history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TouchSymbol {
    Lift,
    Touch(Cell),
}

impl TouchSymbol {
    pub fn is_lift(&self) -> bool {
        matches!(self, TouchSymbol::Lift)
    }

    pub fn cell(&self) -> Option<Cell> {
        match self {
            TouchSymbol::Lift => None,
            TouchSymbol::Touch(c) => Some(*c),
        }
    }
}

/// Bounded window over the most recent touch symbols, most recent last.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TouchHistory {
    symbols: Vec<TouchSymbol>,
    capacity: usize,
}

impl TouchHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history capacity must be positive");
        Self { symbols: Vec::with_capacity(capacity), capacity }
    }

    /// Capacity long enough to hold any gesture an option of `timeout` steps can complete.
    pub fn for_timeout(timeout: usize) -> Self {
        Self::new(timeout + 2)
    }

    pub fn from_symbols(capacity: usize, symbols: &[TouchSymbol]) -> Self {
        let mut h = Self::new(capacity);
        for s in symbols {
            h.push(*s);
        }
        h
    }

    pub fn push(&mut self, symbol: TouchSymbol) {
        if self.symbols.len() == self.capacity {
            self.symbols.remove(0);
        }
        self.symbols.push(symbol);
    }

    /// Copying form of [`TouchHistory::push`].
    pub fn append_touch(&self, symbol: TouchSymbol) -> Self {
        let mut next = self.clone();
        next.push(symbol);
        next
    }

    pub fn clear(&mut self) {
        self.symbols.clear();
    }

    pub fn symbols(&self) -> &[TouchSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last(&self) -> Option<TouchSymbol> {
        self.symbols.last().copied()
    }

    /// Position of the finger after the most recent symbol, `None` when lifted.
    pub fn last_touch(&self) -> Option<Cell> {
        self.last().and_then(|s| s.cell())
    }

    /// First touch of the open stroke, if the finger is down and the lift
    /// that opened the stroke is still held.
    pub fn stroke_start(&self) -> Option<Cell> {
        self.last_touch()?;
        let open = self.symbols.iter().rposition(|s| s.is_lift())?;
        self.symbols[open + 1].cell()
    }
}

/// Compass directions in tie-break priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    /// Unit step in (row, col); rows grow downward.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::N => (-1, 0),
            Direction::NE => (-1, 1),
            Direction::E => (0, 1),
            Direction::SE => (1, 1),
            Direction::S => (1, 0),
            Direction::SW => (1, -1),
            Direction::W => (0, -1),
            Direction::NW => (-1, -1),
        }
    }

    /// Rotate clockwise by `steps` eighth-turns.
    pub fn rotate(self, steps: usize) -> Direction {
        Self::ALL[(self.index() + steps) % 8]
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::NE => "NE",
            Direction::E => "E",
            Direction::SE => "SE",
            Direction::S => "S",
            Direction::SW => "SW",
            Direction::W => "W",
            Direction::NW => "NW",
        }
    }
}

/// Quantize a displacement to the compass direction with the largest dot
/// product against its unit vector; ties go to the earlier entry of
/// [`Direction::ALL`].
pub fn direction_of_offset(d_row: i64, d_col: i64) -> Option<Direction> {
    if d_row == 0 && d_col == 0 {
        return None;
    }
    let (dr, dc) = (d_row as f64, d_col as f64);
    let mut best = Direction::N;
    let mut best_dot = f64::NEG_INFINITY;
    for dir in Direction::ALL {
        let (ur, uc) = dir.offset();
        let norm = ((ur * ur + uc * uc) as f64).sqrt();
        let dot = (dr * ur as f64 + dc * uc as f64) / norm;
        if dot > best_dot + 1e-12 {
            best = dir;
            best_dot = dot;
        }
    }
    Some(best)
}

pub fn direction_of(geometry: &GridGeometry, start: Cell, end: Cell) -> Option<Direction> {
    let (r0, c0) = geometry.coords(start);
    let (r1, c1) = geometry.coords(end);
    direction_of_offset(r1 as i64 - r0 as i64, c1 as i64 - c0 as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GestureClass {
    Tap,
    Swipe,
    Fling,
}

impl GestureClass {
    /// Tie-break order used by the class selector.
    pub const ALL: [GestureClass; 3] = [GestureClass::Tap, GestureClass::Swipe, GestureClass::Fling];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::Tap => "tap",
            GestureClass::Swipe => "swipe",
            GestureClass::Fling => "fling",
        }
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identity of one gesture GVF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GestureGoal {
    Tap(Cell),
    Swipe { start: Cell, end: Cell },
    Fling(Direction),
}

impl GestureGoal {
    pub fn class(&self) -> GestureClass {
        match self {
            GestureGoal::Tap(_) => GestureClass::Tap,
            GestureGoal::Swipe { .. } => GestureClass::Swipe,
            GestureGoal::Fling(_) => GestureClass::Fling,
        }
    }
}

impl fmt::Display for GestureGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureGoal::Tap(c) => write!(f, "tap({c})"),
            GestureGoal::Swipe { start, end } => write!(f, "swipe({start},{end})"),
            GestureGoal::Fling(d) => write!(f, "fling({})", d.name()),
        }
    }
}

/// The stroke closed by the final lift, if the history ends with one.
///
/// Returns the touched cells strictly between the last two lifts.
fn closing_stroke(symbols: &[TouchSymbol]) -> Option<&[TouchSymbol]> {
    let (last, body) = symbols.split_last()?;
    if !last.is_lift() {
        return None;
    }
    let open = body.iter().rposition(|s| s.is_lift())?;
    let stroke = &body[open + 1..];
    if stroke.is_empty() {
        None
    } else {
        Some(stroke)
    }
}

fn stroke_ends(stroke: &[TouchSymbol]) -> (Cell, Cell) {
    let start = stroke[0].cell().expect("stroke holds touches only");
    let end = stroke[stroke.len() - 1].cell().expect("stroke holds touches only");
    (start, end)
}

pub fn swipe_cumulant(history: &TouchHistory, start: Cell, end: Cell) -> f64 {
    match closing_stroke(history.symbols()) {
        Some(stroke) if stroke_ends(stroke) == (start, end) => 1.0,
        _ => 0.0,
    }
}

pub fn tap_cumulant(history: &TouchHistory, cell: Cell) -> f64 {
    match closing_stroke(history.symbols()) {
        Some([TouchSymbol::Touch(c)]) if *c == cell => 1.0,
        _ => 0.0,
    }
}

pub fn fling_cumulant(geometry: &GridGeometry, history: &TouchHistory, direction: Direction) -> f64 {
    match closing_stroke(history.symbols()) {
        Some(stroke) => {
            let (start, end) = stroke_ends(stroke);
            if direction_of(geometry, start, end) == Some(direction) {
                1.0
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

pub fn cumulant(geometry: &GridGeometry, goal: &GestureGoal, history: &TouchHistory) -> f64 {
    match *goal {
        GestureGoal::Tap(c) => tap_cumulant(history, c),
        GestureGoal::Swipe { start, end } => swipe_cumulant(history, start, end),
        GestureGoal::Fling(d) => fling_cumulant(geometry, history, d),
    }
}

/// Every goal whose cumulant is 1 on `history`, read off the closing stroke
/// in O(history length).
pub fn completed_gestures(geometry: &GridGeometry, history: &TouchHistory) -> BTreeSet<GestureGoal> {
    completed_from_symbols(geometry, history.symbols())
}

pub(crate) fn completed_from_symbols(
    geometry: &GridGeometry,
    symbols: &[TouchSymbol],
) -> BTreeSet<GestureGoal> {
    let mut out = BTreeSet::new();
    if let Some(stroke) = closing_stroke(symbols) {
        let (start, end) = stroke_ends(stroke);
        out.insert(GestureGoal::Swipe { start, end });
        if stroke.len() == 1 {
            out.insert(GestureGoal::Tap(start));
        }
        if let Some(d) = direction_of(geometry, start, end) {
            out.insert(GestureGoal::Fling(d));
        }
    }
    out
}

/// Class-projected completion flags in [`GestureClass::ALL`] order.
pub fn completed_classes(completed: &BTreeSet<GestureGoal>) -> [bool; 3] {
    let mut flags = [false; 3];
    for g in completed {
        flags[g.class().index()] = true;
    }
    flags
}

/// A gesture GVF: the goal's cumulant with continuation `base_discount * (1 - C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GvfSpec {
    pub goal: GestureGoal,
    pub base_discount: f64,
}

impl GvfSpec {
    pub fn new(goal: GestureGoal, base_discount: f64) -> Result<Self> {
        if !(base_discount > 0.0 && base_discount <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "base discount {base_discount} outside (0, 1]"
            )));
        }
        Ok(Self { goal, base_discount })
    }

    pub fn cumulant(&self, geometry: &GridGeometry, history: &TouchHistory) -> f64 {
        cumulant(geometry, &self.goal, history)
    }

    pub fn continuation(&self, geometry: &GridGeometry, history: &TouchHistory) -> f64 {
        self.base_discount * (1.0 - self.cumulant(geometry, history))
    }
}

/// All goals on the grid: taps by cell, swipes by (start, end), then flings
/// in compass priority order. Parameter files depend on this order.
pub fn enumerate_goals(geometry: &GridGeometry) -> Vec<GestureGoal> {
    let n = geometry.n_cells();
    let mut goals = Vec::with_capacity(n + n * n + 8);
    goals.extend(geometry.cells().map(GestureGoal::Tap));
    for start in geometry.cells() {
        for end in geometry.cells() {
            goals.push(GestureGoal::Swipe { start, end });
        }
    }
    goals.extend(Direction::ALL.iter().map(|&d| GestureGoal::Fling(d)));
    goals
}

/// Position of `goal` in [`enumerate_goals`] order.
pub fn goal_index(geometry: &GridGeometry, goal: &GestureGoal) -> usize {
    let n = geometry.n_cells();
    match *goal {
        GestureGoal::Tap(c) => c.0,
        GestureGoal::Swipe { start, end } => n + start.0 * n + end.0,
        GestureGoal::Fling(d) => n + n * n + d.index(),
    }
}

/// Fingerprint of the goal ordering for `geometry`; stored in parameter files.
pub fn goal_ordering_checksum(geometry: &GridGeometry) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(format!("grid {geometry}\n").as_bytes());
    for goal in enumerate_goals(geometry) {
        hasher.update(goal.to_string().as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Literal reference matcher.
///
/// Tries every goal against every opening index `i < t` of the cumulant
/// pattern. Exponentially slower than [`completed_gestures`] and shares none
/// of its code; it exists to check it.
pub mod oracle {
    use super::*;

    fn literal_swipe(symbols: &[TouchSymbol], q1: Cell, q2: Cell) -> bool {
        if symbols.is_empty() {
            return false;
        }
        let t = symbols.len() - 1;
        if symbols[t] != TouchSymbol::Lift {
            return false;
        }
        (0..t).any(|i| {
            i + 1 <= t - 1
                && symbols[i] == TouchSymbol::Lift
                && symbols[i + 1] == TouchSymbol::Touch(q1)
                && symbols[t - 1] == TouchSymbol::Touch(q2)
                && (i + 1..t).all(|j| symbols[j] != TouchSymbol::Lift)
        })
    }

    fn literal_tap(symbols: &[TouchSymbol], c: Cell) -> bool {
        let n = symbols.len();
        n >= 3
            && symbols[n - 3] == TouchSymbol::Lift
            && symbols[n - 2] == TouchSymbol::Touch(c)
            && symbols[n - 1] == TouchSymbol::Lift
    }

    fn literal_fling(geometry: &GridGeometry, symbols: &[TouchSymbol], d: Direction) -> bool {
        geometry.cells().any(|a| {
            geometry.cells().any(|b| {
                a != b && direction_of(geometry, a, b) == Some(d) && literal_swipe(symbols, a, b)
            })
        })
    }

    pub fn goal_completed(geometry: &GridGeometry, symbols: &[TouchSymbol], goal: &GestureGoal) -> bool {
        match *goal {
            GestureGoal::Tap(c) => literal_tap(symbols, c),
            GestureGoal::Swipe { start, end } => literal_swipe(symbols, start, end),
            GestureGoal::Fling(d) => literal_fling(geometry, symbols, d),
        }
    }

    pub fn oracle_completed_gestures(
        geometry: &GridGeometry,
        history: &TouchHistory,
    ) -> BTreeSet<GestureGoal> {
        enumerate_goals(geometry)
            .into_iter()
            .filter(|g| goal_completed(geometry, history.symbols(), g))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: TouchSymbol = TouchSymbol::Lift;

    fn t(c: usize) -> TouchSymbol {
        TouchSymbol::Touch(Cell(c))
    }

    fn hist(symbols: &[TouchSymbol]) -> TouchHistory {
        TouchHistory::from_symbols(12, symbols)
    }

    #[test]
    fn stroke_start_tracks_open_stroke() {
        assert_eq!(hist(&[L]).stroke_start(), None);
        assert_eq!(hist(&[L, t(1)]).stroke_start(), Some(Cell(1)));
        assert_eq!(hist(&[L, t(1), t(2)]).stroke_start(), Some(Cell(1)));
        assert_eq!(hist(&[L, t(1), t(2), L]).stroke_start(), None);
        assert_eq!(hist(&[t(1), t(2)]).stroke_start(), None);
    }

    fn grid(rows: usize, cols: usize) -> GridGeometry {
        GridGeometry::new(rows, cols).unwrap()
    }

    #[test]
    fn append_touch_keeps_order_and_bounds() {
        let empty = TouchHistory::new(4);
        assert_eq!(empty.append_touch(L).symbols(), &[L]);
        let h = hist(&[L, t(3)]).append_touch(L);
        assert_eq!(h.symbols(), &[L, t(3), L]);
        let full = TouchHistory::from_symbols(4, &[t(0), t(1), t(2), t(3)]);
        assert_eq!(full.append_touch(t(4)).symbols(), &[t(1), t(2), t(3), t(4)]);
    }

    #[test]
    fn zero_dimension_geometry_rejected() {
        assert!(GridGeometry::new(0, 3).is_err());
        assert!(GridGeometry::new(3, 0).is_err());
        assert_eq!(grid(9, 6).n_cells(), 54);
    }

    #[test]
    fn swipe_examples() {
        assert_eq!(swipe_cumulant(&hist(&[L, t(1), t(2), L]), Cell(1), Cell(2)), 1.0);
        assert_eq!(swipe_cumulant(&hist(&[L, t(1), L]), Cell(1), Cell(1)), 1.0);
        assert_eq!(swipe_cumulant(&hist(&[L, t(1), L, t(2), L]), Cell(1), Cell(2)), 0.0);
        assert_eq!(swipe_cumulant(&hist(&[L, t(1), t(5), t(2), L]), Cell(1), Cell(2)), 1.0);
        assert_eq!(swipe_cumulant(&hist(&[L, t(1), t(2)]), Cell(1), Cell(2)), 0.0);
    }

    #[test]
    fn tap_examples() {
        assert_eq!(tap_cumulant(&hist(&[L, t(4), L]), Cell(4)), 1.0);
        assert_eq!(tap_cumulant(&hist(&[L, t(4), t(4), L]), Cell(4)), 0.0);
        assert_eq!(tap_cumulant(&hist(&[t(4), L]), Cell(4)), 0.0);
        assert_eq!(tap_cumulant(&hist(&[L, t(4), L]), Cell(5)), 0.0);
    }

    #[test]
    fn fling_examples() {
        let g = grid(5, 5);
        let up = hist(&[L, TouchSymbol::Touch(g.cell(2, 2)), TouchSymbol::Touch(g.cell(0, 2)), L]);
        assert_eq!(fling_cumulant(&g, &up, Direction::N), 1.0);
        assert_eq!(fling_cumulant(&g, &up, Direction::S), 0.0);
        let tap = hist(&[L, TouchSymbol::Touch(g.cell(2, 2)), L]);
        for d in Direction::ALL {
            assert_eq!(fling_cumulant(&g, &tap, d), 0.0);
        }
    }

    #[test]
    fn direction_examples() {
        let g = grid(6, 6);
        assert_eq!(direction_of(&g, g.cell(2, 2), g.cell(2, 5)), Some(Direction::E));
        assert_eq!(direction_of(&g, g.cell(2, 2), g.cell(0, 4)), Some(Direction::NE));
        assert_eq!(direction_of(&g, g.cell(1, 1), g.cell(1, 1)), None);
        assert_eq!(direction_of(&g, g.cell(0, 0), g.cell(5, 0)), Some(Direction::S));
        assert_eq!(direction_of(&g, g.cell(0, 5), g.cell(5, 0)), Some(Direction::SW));
        // steep but not vertical: (−3, 1) is closer to N than NE
        assert_eq!(direction_of_offset(-3, 1), Some(Direction::N));
        assert_eq!(direction_of_offset(-2, 1), Some(Direction::NE));
    }

    #[test]
    fn completed_examples() {
        let g = grid(3, 3);
        let (q1, q2) = (g.cell(2, 0), g.cell(0, 2));
        let h = hist(&[L, TouchSymbol::Touch(q1), TouchSymbol::Touch(q2), L]);
        let expect: BTreeSet<_> = [
            GestureGoal::Swipe { start: q1, end: q2 },
            GestureGoal::Fling(direction_of(&g, q1, q2).unwrap()),
        ]
        .into_iter()
        .collect();
        assert_eq!(completed_gestures(&g, &h), expect);
        assert_eq!(oracle::oracle_completed_gestures(&g, &h), expect);

        let c = Cell(4);
        let tap: BTreeSet<_> =
            [GestureGoal::Tap(c), GestureGoal::Swipe { start: c, end: c }].into_iter().collect();
        assert_eq!(completed_gestures(&g, &hist(&[L, t(4), L])), tap);
        assert!(completed_gestures(&g, &hist(&[t(1), t(2)])).is_empty());
        assert!(oracle::oracle_completed_gestures(&g, &hist(&[L])).is_empty());
    }

    #[test]
    fn goal_enumeration_counts() {
        assert_eq!(enumerate_goals(&grid(9, 6)).len(), 2978);
        assert_eq!(enumerate_goals(&grid(1, 1)).len(), 10);
        assert_eq!(enumerate_goals(&grid(2, 2)).len(), 28);
    }

    #[test]
    fn goal_index_matches_enumeration() {
        let g = grid(3, 2);
        let goals = enumerate_goals(&g);
        let unique: BTreeSet<_> = goals.iter().collect();
        assert_eq!(unique.len(), goals.len());
        for (i, goal) in goals.iter().enumerate() {
            assert_eq!(goal_index(&g, goal), i);
        }
    }

    #[test]
    fn checksum_depends_on_geometry() {
        assert_eq!(goal_ordering_checksum(&grid(4, 3)), goal_ordering_checksum(&grid(4, 3)));
        assert_ne!(goal_ordering_checksum(&grid(4, 3)), goal_ordering_checksum(&grid(3, 4)));
    }

    #[test]
    fn gvf_continuation_is_discounted_complement() {
        let g = grid(2, 2);
        let spec = GvfSpec::new(GestureGoal::Tap(Cell(1)), 0.99).unwrap();
        let done = hist(&[L, t(1), L]);
        assert_eq!(spec.cumulant(&g, &done), 1.0);
        assert_eq!(spec.continuation(&g, &done), 0.0);
        let open = hist(&[L, t(1)]);
        assert_eq!(spec.continuation(&g, &open), 0.99);
        assert!(GvfSpec::new(GestureGoal::Tap(Cell(1)), 0.0).is_err());
    }

    fn symbol_strategy(n_cells: usize) -> impl Strategy<Value = TouchSymbol> {
        (0..=n_cells).prop_map(move |i| if i == n_cells { L } else { t(i) })
    }

    proptest! {
        #[test]
        fn completions_agree_with_oracle_on_3x2(seq in prop::collection::vec(symbol_strategy(6), 1..9)) {
            let g = grid(3, 2);
            let h = TouchHistory::from_symbols(12, &seq);
            prop_assert_eq!(completed_gestures(&g, &h), oracle::oracle_completed_gestures(&g, &h));
        }

        #[test]
        fn trailing_touch_completes_nothing(seq in prop::collection::vec(symbol_strategy(4), 0..8), c in 0usize..4) {
            let g = grid(2, 2);
            let mut h = TouchHistory::from_symbols(12, &seq);
            h.push(t(c));
            prop_assert!(completed_gestures(&g, &h).is_empty());
        }

        #[test]
        fn swipe_ignores_prefix(
            prefix in prop::collection::vec(symbol_strategy(6), 0..5),
            stroke in prop::collection::vec(0usize..6, 1..4),
        ) {
            let mut tail = vec![L];
            tail.extend(stroke.iter().map(|&c| t(c)));
            tail.push(L);
            let (s, e) = (Cell(stroke[0]), Cell(*stroke.last().unwrap()));
            let bare = TouchHistory::from_symbols(12, &tail);
            let mut full_syms = prefix.clone();
            full_syms.extend(tail.iter().copied());
            let full = TouchHistory::from_symbols(12, &full_syms);
            prop_assert_eq!(swipe_cumulant(&bare, s, e), 1.0);
            prop_assert_eq!(swipe_cumulant(&full, s, e), 1.0);
        }

        #[test]
        fn direction_rotates_with_grid(dr in -6i64..=6, dc in -6i64..=6) {
            prop_assume!(dr != 0 || dc != 0);
            // clockwise quarter turn in (row, col) with rows pointing down
            let d = direction_of_offset(dr, dc).unwrap();
            let rotated = direction_of_offset(dc, -dr).unwrap();
            prop_assert_eq!(rotated, d.rotate(2));
            prop_assert_eq!(direction_of_offset(dr, dc), Some(d));
        }

        #[test]
        fn cumulants_are_binary(seq in prop::collection::vec(symbol_strategy(4), 1..8)) {
            let g = grid(2, 2);
            let h = TouchHistory::from_symbols(12, &seq);
            for goal in enumerate_goals(&g) {
                let spec = GvfSpec { goal, base_discount: 0.9 };
                let c = spec.cumulant(&g, &h);
                prop_assert!(c == 0.0 || c == 1.0);
                prop_assert_eq!(spec.continuation(&g, &h), 0.9 * (1.0 - c));
            }
        }
    }
}
