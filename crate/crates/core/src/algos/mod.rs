//! Learners: replay, exploration, IQL/VDN/QMIX and PPO/A2C.
//!
//! All team members share one agent network; when `agent_id` is set every
//! observation gets the member's one-hot id prepended so the shared network
//! can still specialise.

mod mixer;
mod policy;
mod replay;
mod schedule;
mod select;
mod value;

pub use mixer::{qmix_mix, vdn_mix, Mixer};
pub use policy::{ppo_ratio, PolicyAlgo, PolicyConfig, PolicyLearner, PolicyLoss, PolicySample, RolloutBatch, RolloutStep};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;
pub use select::{select_action, Exploration};
pub use value::{agent_input, ValueAlgo, ValueConfig, ValueLearner};
