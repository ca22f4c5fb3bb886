//! Built-in correctness checks: the gesture matcher against its oracle, a
//! tabular Bellman fixed point and network gradients.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gesture::{completed_gestures, oracle, Cell, GestureGoal, GridGeometry, TouchHistory, TouchSymbol};
use crate::value::{finite_diff_gradcheck, Backend, FeatureLayout, Mlp, QApproximator, QLearner, TdConfig, Transition};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Signature shared by the production matcher and any substitute under test.
pub type Matcher = dyn Fn(&GridGeometry, &TouchHistory) -> BTreeSet<GestureGoal>;

/// Every touch/lift sequence of length at most `max_len` over `geometry`.
pub fn all_sequences(geometry: &GridGeometry, max_len: usize) -> Vec<Vec<TouchSymbol>> {
    let alphabet: Vec<TouchSymbol> =
        geometry.cells().map(TouchSymbol::Touch).chain(std::iter::once(TouchSymbol::Lift)).collect();
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<TouchSymbol>| {
                alphabet.iter().map(move |&a| {
                    let mut next = s.clone();
                    next.push(a);
                    next
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Compares `matcher` with the oracle on every sequence of length at most 5
/// over a 2x2 grid.
pub fn check_gesture_oracle(matcher: &Matcher) -> CheckResult {
    let start = Instant::now();
    let g = GridGeometry::new(2, 2).expect("2x2 grid");
    let seqs = all_sequences(&g, 5);
    let full = seqs.iter().filter(|s| s.len() == 5).count();
    let mut mismatches = 0;
    let mut first = None;
    for s in &seqs {
        let h = TouchHistory::from_symbols(8, s);
        let got = matcher(&g, &h);
        if got != oracle::oracle_completed_gestures(&g, &h) {
            mismatches += 1;
            first.get_or_insert_with(|| format!("{s:?}"));
        }
    }
    let elapsed = start.elapsed();
    let passed = mismatches == 0 && full == 3125 && elapsed < Duration::from_secs(10);
    let mut detail = format!("{} sequences ({full} of length 5), {mismatches} mismatches", seqs.len());
    if let Some(f) = first {
        detail.push_str(&format!(", first at {f}"));
    }
    CheckResult { name: "gesture-oracle".into(), passed, detail, elapsed }
}

pub fn check_production_matcher() -> CheckResult {
    check_gesture_oracle(&completed_gestures)
}

const CHAIN: usize = 5;
const CHAIN_GAMMA: f64 = 0.9;

/// Deterministic chain: action 1 moves right, action 0 moves left (or stays
/// at the left end). Moving right from the last state pays 1 and ends.
fn chain_step(s: usize, a: usize) -> (usize, f64, bool) {
    match a {
        1 if s + 1 == CHAIN => (s, 1.0, true),
        1 => (s + 1, 0.0, false),
        _ => (s.saturating_sub(1), 0.0, false),
    }
}

/// Value iteration to machine precision.
pub fn chain_value_iteration() -> [[f64; 2]; CHAIN] {
    let mut q = [[0.0f64; 2]; CHAIN];
    loop {
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (s2, r, done) = chain_step(s, a);
                *v = r + if done { 0.0 } else { CHAIN_GAMMA * q[s2][0].max(q[s2][1]) };
            }
        }
        let delta = next.iter().flatten().zip(q.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        if delta < 1e-15 {
            return q;
        }
    }
}

/// Tabular Q-learning on the chain, full-sweep batches, against value iteration.
pub fn check_bellman_chain() -> CheckResult {
    let start = Instant::now();
    let layout = Arc::new(FeatureLayout::new().one_hot("state", CHAIN));
    let mask: Arc<[bool]> = vec![true; 2].into();
    let data: Vec<Transition> = (0..CHAIN)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| {
            let (s2, r, done) = chain_step(s, a);
            Transition {
                features: layout.encode(&[s], &[]),
                actions: vec![a],
                cumulant: r,
                continuation: if done { 0.0 } else { CHAIN_GAMMA },
                next_features: layout.encode(&[s2], &[]),
                next_action_mask: Arc::clone(&mask),
            }
        })
        .collect();
    let q = QApproximator::table(&layout, 2).expect("one-hot layout");
    let td = TdConfig { learning_rate: 0.5, batch_size: data.len(), target_sync_period: 1, ..TdConfig::table_default() };
    let mut learner = QLearner::new(q, td);
    let oracle = chain_value_iteration();
    let batch: Vec<&Transition> = data.iter().collect();
    let err = |l: &QLearner| {
        let Backend::Table(t) = l.online.backend() else { unreachable!("table backend") };
        (0..CHAIN).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| (t.row(s)[a] - oracle[s][a]).abs()).fold(0.0, f64::max)
    };
    let mut updates = 0;
    let mut worst = err(&learner);
    while worst >= 1e-6 && updates < 10_000 {
        learner.update(&batch).expect("well-formed batch");
        updates += 1;
        worst = err(&learner);
    }
    let elapsed = start.elapsed();
    let passed = worst < 1e-6 && updates < 10_000 && elapsed < Duration::from_secs(5);
    let detail = format!("max |q - q*| = {worst:.2e} after {updates} updates");
    CheckResult { name: "bellman-fixed-point".into(), passed, detail, elapsed }
}

/// Backpropagation against central differences on 20 random small networks.
pub fn check_gradients(seed: u64) -> CheckResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let depth = rng.gen_range(1..=3);
        let mut sizes = vec![rng.gen_range(2..=6)];
        sizes.extend((0..depth).map(|_| rng.gen_range(2..=8)));
        sizes.push(rng.gen_range(1..=4));
        let mlp = Mlp::new(&sizes, &mut rng);
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for action in 0..mlp.output_size() {
            worst = worst.max(finite_diff_gradcheck(&mlp, &x, action, 1e-5));
        }
    }
    let elapsed = start.elapsed();
    let passed = worst < 1e-4 && elapsed < Duration::from_secs(30);
    let detail = format!("max relative error {worst:.2e} over 20 networks");
    CheckResult { name: "gradient-check".into(), passed, detail, elapsed }
}

/// All three checks with the production matcher.
pub fn run_all() -> Vec<CheckResult> {
    run_all_with(&completed_gestures)
}

pub fn run_all_with(matcher: &Matcher) -> Vec<CheckResult> {
    vec![check_gesture_oracle(matcher), check_bellman_chain(), check_gradients(0)]
}

/// A matcher that ignores taps on one cell, for mutation tests.
pub fn broken_matcher(g: &GridGeometry, h: &TouchHistory) -> BTreeSet<GestureGoal> {
    let mut out = completed_gestures(g, h);
    out.remove(&GestureGoal::Tap(Cell(0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_counts() {
        let g = GridGeometry::new(2, 2).unwrap();
        let seqs = all_sequences(&g, 5);
        assert_eq!(seqs.len(), 1 + 5 + 25 + 125 + 625 + 3125);
        assert_eq!(seqs.iter().filter(|s| s.len() == 5).count(), 3125);
    }

    #[test]
    fn chain_oracle_matches_closed_form() {
        let q = chain_value_iteration();
        // Moving right from state s reaches the payoff after 5 - s steps.
        for s in 0..CHAIN {
            assert!((q[s][1] - CHAIN_GAMMA.powi((CHAIN - 1 - s) as i32)).abs() < 1e-12);
        }
        assert!((q[0][0] - CHAIN_GAMMA * q[0][1]).abs() < 1e-12);
    }

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn mutated_matcher_fails() {
        let r = check_gesture_oracle(&broken_matcher);
        assert!(!r.passed);
        assert!(r.detail.contains("first at"));
    }
}
