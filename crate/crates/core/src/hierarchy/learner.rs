//! Replay-backed Q-learner for a single approximator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::value::{QApproximator, QLearner, ReplayBuffer, TdConfig, Transition};

#[derive(Debug)]
pub struct DqnLearner {
    learner: QLearner,
    replay: ReplayBuffer<Transition>,
    rng: ChaCha8Rng,
    losses: Vec<f64>,
}

impl DqnLearner {
    pub fn new(q: QApproximator, td: TdConfig, replay_capacity: usize) -> Self {
        Self {
            learner: QLearner::new(q, td),
            replay: ReplayBuffer::new(replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(td.seed ^ 0xd0_0a11),
            losses: Vec::new(),
        }
    }

    pub fn ingest(&mut self, items: impl IntoIterator<Item = Transition>) {
        self.replay.extend(items);
    }

    pub fn stored(&self) -> u64 {
        self.replay.inserted()
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// One update when a full batch is buffered.
    pub fn train_step(&mut self) -> Result<Option<f64>> {
        let batch = self.learner.config.batch_size;
        if self.replay.len() < batch {
            return Ok(None);
        }
        let sample = self.replay.sample(batch, &mut self.rng);
        let loss = self.learner.update(&sample)?;
        self.losses.push(loss);
        Ok(Some(loss))
    }

    pub fn updates(&self) -> u64 {
        self.learner.updates()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn online(&self) -> &QApproximator {
        &self.learner.online
    }
}
