//! Level 2: average per-step reward of each gesture class.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::GestureClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTwoAgent {
    pub estimates: [f64; 3],
    pub counts: [u64; 3],
    pub epsilon: f64,
}

impl LevelTwoAgent {
    pub fn new(epsilon: f64) -> Self {
        Self { estimates: [0.0; 3], counts: [0; 3], epsilon }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    /// Epsilon-greedy over the estimates; ties go to tap, then swipe.
    pub fn select_class<R: Rng + ?Sized>(&self, rng: &mut R) -> GestureClass {
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            return GestureClass::ALL[rng.gen_range(0..3)];
        }
        let mut best = 0;
        for k in 1..3 {
            if self.estimates[k] > self.estimates[best] {
                best = k;
            }
        }
        GestureClass::ALL[best]
    }

    /// Folds one episode's per-step reward into the class mean.
    pub fn update(&mut self, class: GestureClass, reward_sum: f64, steps: u64) -> Result<()> {
        if steps == 0 {
            return Err(Error::InvalidConfig("level-2 update needs at least one step".into()));
        }
        let k = class.index();
        self.counts[k] += 1;
        let x = reward_sum / steps as f64;
        self.estimates[k] += (x - self.estimates[k]) / self.counts[k] as f64;
        Ok(())
    }

    pub fn estimate(&self, class: GestureClass) -> f64 {
        self.estimates[class.index()]
    }
}
