//! Value learners: double DQN for the lock and hierarchical SARSA for the maze.

pub mod dqn;
pub mod losses;
pub mod sarsa;

pub use dqn::{DoubleQ, DqnConfig, DqnLearner, QBackend};
pub use losses::{bce_loss, dqn_loss, flow_matching_loss, reg_loss, sigmoid, value_loss, Aggregation, LossKind};
pub use sarsa::{check_reward_kind, low_level_discount, SarsaConfig, SarsaHigh, SarsaLow, ValuePair};
