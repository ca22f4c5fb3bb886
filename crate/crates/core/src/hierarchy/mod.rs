//! The three-level hierarchy: gesture execution, goal selection and class
//! selection, plus the flat baseline used for comparison.

pub mod episode;
pub mod learner;
pub mod level0;
pub mod level1;
pub mod level2;
pub mod options;
pub mod pretrain;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gesture::{GestureClass, GestureGoal};

pub use episode::{
    act_episode, act_flat_episode, act_random_episode, write_episode_log, ClassFrequency, ClassStat, EpisodeBatches,
    EpisodeConfig, EpisodeRecord, FlatAgent, OptionLog,
};
pub use learner::DqnLearner;
pub use level0::{BackendKind, GesturePolicy, Level0Config, LevelZeroAgent, LevelZeroEncoder, LevelZeroLearner};
pub use level1::{
    discount_power, level1_transition, select_from_q, GoalSelection, HeadLayout, Level1Config, LevelOneAgent, ObservationEncoder,
    DEFAULT_GAMMA_ENV,
};
pub use level2::LevelTwoAgent;
pub use options::{run_option, OptionExecution, Termination};
pub use pretrain::{
    class_completion_rates, completion_rate, gesture_pad, pretrain_gestures, sample_goal, PretrainConfig,
    PretrainReport,
};

/// What one level passes to the level below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelMessage {
    /// Level 2 to level 1.
    Class(GestureClass),
    /// Level 1 to level 0.
    Goal(GestureGoal),
}

impl LevelMessage {
    /// Checks that a goal sent down answers the class received from above.
    pub fn conforms(above: GestureClass, below: &LevelMessage) -> Result<()> {
        match below {
            LevelMessage::Goal(g) if g.class() == above => Ok(()),
            LevelMessage::Goal(g) => Err(Error::InvalidConfig(format!("goal {g} does not belong to class {above}"))),
            LevelMessage::Class(_) => Err(Error::InvalidConfig("level 1 must send a goal".into())),
        }
    }
}
