//! One-step Q-learning toward cumulant-based Bellman targets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::approx::{Backend, QApproximator};
use super::features::FeatureVector;
use crate::error::{Error, Result};

/// A training record `(s, a, C, gamma, s')`.
///
/// `actions` lists one output index per trained head; every listed output
/// is regressed toward the same target.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub features: FeatureVector,
    pub actions: Vec<usize>,
    pub cumulant: f64,
    pub continuation: f64,
    pub next_features: FeatureVector,
    pub next_action_mask: Arc<[bool]>,
}

impl Transition {
    pub fn action_index(&self) -> usize {
        self.actions[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self { start: epsilon, end: epsilon, decay_steps: 0 }
    }

    /// Linear interpolation from `start` to `end` over `decay_steps`.
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync_period: u64,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
}

impl TdConfig {
    pub fn network_default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            target_sync_period: 200,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay_steps: 50_000 },
            seed: 0,
        }
    }

    pub fn table_default() -> Self {
        Self { learning_rate: 0.1, ..Self::network_default() }
    }

    pub fn validate(&self) -> Result<()> {
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.target_sync_period < 1 {
            return Err(Error::InvalidConfig("target_sync_period must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !eps_ok(self.epsilon.start) || !eps_ok(self.epsilon.end) {
            return Err(Error::InvalidConfig("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Bootstrap value of `next_q` under `mask`: per head, the max over
/// permitted entries; averaged over heads that permit anything.
pub fn masked_bootstrap(next_q: &[f64], mask: &[bool], heads: usize) -> Option<f64> {
    let width = next_q.len() / heads;
    let mut sum = 0.0;
    let mut used = 0;
    for h in 0..heads {
        let range = h * width..(h + 1) * width;
        let best = next_q[range.clone()]
            .iter()
            .zip(&mask[range])
            .filter(|(_, m)| **m)
            .map(|(q, _)| *q)
            .fold(f64::NEG_INFINITY, f64::max);
        if best > f64::NEG_INFINITY {
            sum += best;
            used += 1;
        }
    }
    (used > 0).then(|| sum / used as f64)
}

/// `C + gamma * max_a' q_target(s', a')`, with the bootstrap dropped when
/// `gamma` is zero.
pub fn td_target(transition: &Transition, target: &QApproximator) -> Result<f64> {
    if transition.continuation == 0.0 {
        return Ok(transition.cumulant);
    }
    let next_q = target.q_values(&transition.next_features)?;
    let boot = masked_bootstrap(&next_q, &transition.next_action_mask, target.heads()).ok_or(Error::EmptyMask)?;
    Ok(transition.cumulant + transition.continuation * boot)
}

/// Online/target pair with a sync counter.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub online: QApproximator,
    pub target: QApproximator,
    pub config: TdConfig,
    updates: u64,
}

impl QLearner {
    pub fn new(online: QApproximator, config: TdConfig) -> Self {
        Self { target: online.clone(), online, config, updates: 0 }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One step on `batch`. Returns the mean squared TD error before the step.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        assert!(!batch.is_empty(), "update needs a non-empty batch");
        let targets = batch.iter().map(|t| td_target(t, &self.target)).collect::<Result<Vec<_>>>()?;
        let lr = self.config.learning_rate;
        let loss = match self.online.backend_mut() {
            Backend::Table(table) => {
                let rows = batch.iter().map(|t| table.row_of(&t.features)).collect::<Result<Vec<_>>>()?;
                let mut loss = 0.0;
                for ((t, &y), &row) in batch.iter().zip(&targets).zip(&rows) {
                    let k = t.actions.len() as f64;
                    for &a in &t.actions {
                        loss += (table.row(row)[a] - y).powi(2) / k;
                    }
                }
                for ((t, &y), &row) in batch.iter().zip(&targets).zip(&rows) {
                    for &a in &t.actions {
                        let q = &mut table.row_mut(row)[a];
                        *q += lr * (y - *q);
                    }
                }
                loss / batch.len() as f64
            }
            Backend::Network(mlp) => {
                let mut grads = mlp.grads();
                let mut loss = 0.0;
                let scale = 1.0 / batch.len() as f64;
                let mut d_out = vec![0.0; mlp.output_size()];
                for (t, &y) in batch.iter().zip(&targets) {
                    if t.features.len() != mlp.input_size() {
                        return Err(Error::SizeMismatch { expected: mlp.input_size(), got: t.features.len() });
                    }
                    let trace = mlp.forward_trace(&t.features.values);
                    let q = trace.last().expect("output layer");
                    let k = t.actions.len() as f64;
                    d_out.iter_mut().for_each(|d| *d = 0.0);
                    for &a in &t.actions {
                        let err = q[a] - y;
                        loss += err * err / k;
                        d_out[a] += 2.0 * err * scale / k;
                    }
                    mlp.backward(&trace, &d_out, &mut grads);
                }
                mlp.sgd_step(&grads, lr);
                loss * scale
            }
        };
        self.updates += 1;
        if self.updates % self.config.target_sync_period == 0 {
            self.target.copy_params_from(&self.online);
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_params_from(&self.online);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::approx::Mlp;
    use crate::value::features::FeatureLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot_layout(n: usize) -> Arc<FeatureLayout> {
        Arc::new(FeatureLayout::new().one_hot("state", n))
    }

    fn tr(layout: &Arc<FeatureLayout>, s: usize, a: usize, c: f64, g: f64, s2: usize, n_actions: usize) -> Transition {
        Transition {
            features: layout.encode(&[s], &[]),
            actions: vec![a],
            cumulant: c,
            continuation: g,
            next_features: layout.encode(&[s2], &[]),
            next_action_mask: vec![true; n_actions].into(),
        }
    }

    fn learner(n_states: usize, n_actions: usize, lr: f64) -> QLearner {
        let layout = one_hot_layout(n_states);
        let q = QApproximator::table(&layout, n_actions).unwrap();
        QLearner::new(q, TdConfig { learning_rate: lr, target_sync_period: 1, ..TdConfig::table_default() })
    }

    #[test]
    fn completion_target_is_cumulant() {
        let l = learner(2, 2, 0.1);
        let layout = one_hot_layout(2);
        assert_eq!(td_target(&tr(&layout, 0, 0, 1.0, 0.0, 1, 2), &l.target).unwrap(), 1.0);
    }

    #[test]
    fn bootstrap_uses_masked_max() {
        let mut l = learner(2, 2, 1.0);
        let layout = one_hot_layout(2);
        l.target.backend_mut();
        if let Backend::Table(t) = l.target.backend_mut() {
            t.row_mut(1).copy_from_slice(&[1.0, 5.0]);
        }
        let mut t = tr(&layout, 0, 0, 0.0, 0.99, 1, 2);
        assert!((td_target(&t, &l.target).unwrap() - 4.95).abs() < 1e-12);
        t.next_action_mask = vec![true, false].into();
        assert!((td_target(&t, &l.target).unwrap() - 0.99).abs() < 1e-12);
        t.next_action_mask = vec![false, false].into();
        assert!(matches!(td_target(&t, &l.target), Err(Error::EmptyMask)));
    }

    #[test]
    fn two_head_bootstrap_averages_heads() {
        assert_eq!(masked_bootstrap(&[1.0, 3.0, 2.0, 6.0], &[true, true, true, true], 2), Some(4.5));
        assert_eq!(masked_bootstrap(&[1.0, 3.0, 2.0, 6.0], &[true, false, false, false], 2), Some(1.0));
        assert_eq!(masked_bootstrap(&[1.0, 3.0], &[false, false], 1), None);
    }

    #[test]
    fn table_half_step() {
        let mut l = learner(1, 3, 0.5);
        let layout = one_hot_layout(1);
        let t = tr(&layout, 0, 2, 1.0, 0.0, 0, 3);
        l.update(&[&t]).unwrap();
        assert_eq!(l.online.q_values(&t.features).unwrap(), vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn full_step_zeroes_td_error() {
        let mut l = learner(3, 2, 1.0);
        let layout = one_hot_layout(3);
        if let Backend::Table(t) = l.target.backend_mut() {
            t.row_mut(2).copy_from_slice(&[0.3, 0.7]);
        }
        let t = tr(&layout, 1, 0, 0.25, 0.9, 2, 2);
        let y = td_target(&t, &l.target).unwrap();
        let loss = l.update(&[&t]).unwrap();
        assert!((loss - y * y).abs() < 1e-12);
        assert_eq!(l.online.q_values(&t.features).unwrap()[0], y);
    }

    #[test]
    fn target_syncs_on_period() {
        let layout = one_hot_layout(1);
        let q = QApproximator::table(&layout, 1).unwrap();
        let mut l = QLearner::new(q, TdConfig { learning_rate: 1.0, target_sync_period: 3, ..TdConfig::table_default() });
        let t = tr(&layout, 0, 0, 1.0, 0.0, 0, 1);
        l.update(&[&t]).unwrap();
        l.update(&[&t]).unwrap();
        assert_eq!(l.target.q_values(&t.features).unwrap(), vec![0.0]);
        l.update(&[&t]).unwrap();
        assert_eq!(l.target.q_values(&t.features).unwrap(), vec![1.0]);
    }

    #[test]
    fn network_update_moves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layout = Arc::new(FeatureLayout::new().one_hot("s", 4));
        let q = QApproximator::network(Mlp::new(&[4, 8, 2], &mut rng));
        let mut l = QLearner::new(q, TdConfig { learning_rate: 0.05, ..TdConfig::network_default() });
        let batch: Vec<Transition> = (0..4)
            .map(|s| Transition {
                features: layout.encode(&[s], &[]),
                actions: vec![s % 2],
                cumulant: 1.0,
                continuation: 0.0,
                next_features: layout.encode(&[s], &[]),
                next_action_mask: vec![true, true].into(),
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let before = l.online.clone();
        let first = l.update(&refs).unwrap();
        assert!(first.is_finite());
        assert_ne!(before, l.online);
        let mut last = first;
        for _ in 0..500 {
            last = l.update(&refs).unwrap();
        }
        assert!(last < first * 0.1, "{first} -> {last}");
    }

    #[test]
    fn epsilon_schedule_interpolates() {
        let s = EpsilonSchedule { start: 1.0, end: 0.1, decay_steps: 100 };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.55).abs() < 1e-12);
        assert_eq!(s.value(1000), 0.1);
        assert_eq!(EpsilonSchedule::constant(0.3).value(7), 0.3);
    }

    #[test]
    fn config_validation() {
        assert!(TdConfig::network_default().validate().is_ok());
        assert!(TdConfig { learning_rate: 0.0, ..TdConfig::network_default() }.validate().is_err());
        assert!(TdConfig { target_sync_period: 0, ..TdConfig::network_default() }.validate().is_err());
        let bad_eps = EpsilonSchedule { start: 1.5, end: 0.0, decay_steps: 1 };
        assert!(TdConfig { epsilon: bad_eps, ..TdConfig::network_default() }.validate().is_err());
    }
}
