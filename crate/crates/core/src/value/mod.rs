//! Value-function machinery shared by every level: approximators, TD
//! updates, replay, exploration, hindsight relabeling and persistence.

pub mod approx;
pub mod explore;
pub mod features;
pub mod her;
pub mod persist;
pub mod replay;
pub mod td;

pub use approx::{finite_diff_gradcheck, Backend, Dense, Mlp, QApproximator, QTable};
pub use explore::{epsilon_greedy, masked_argmax};
pub use features::{BlockKind, FeatureBlock, FeatureLayout, FeatureVector};
pub use her::{achieved_goals, her_relabel, GoalEncoder, HerStep, RelabeledTransition, DEFAULT_RELABEL_BUDGET};
pub use persist::{load_approximators, save_approximators};
pub use replay::ReplayBuffer;
pub use td::{masked_bootstrap, td_target, EpsilonSchedule, QLearner, TdConfig, Transition};
