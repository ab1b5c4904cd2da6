//! Toy MDPs, experience storage and the target/online parameter pair.

mod agent;
mod mdp;
mod replay;

pub use agent::{bellman_target, sync_target, AgentParams};
pub use mdp::{
    bellman_backup, env_step, make_garnet, make_gridworld, value_iteration_oracle, FeatureMap,
    MdpSpec, QTable, StartState,
};
pub use replay::{sample_batch, ReplayBuffer, Transition};
