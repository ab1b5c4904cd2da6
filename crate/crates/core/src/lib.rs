//! Resettable first-order optimizers and a small DQN-style laboratory for
//! studying what happens to optimizer state across target-network updates.
//!
//! * [`tensor`] and [`nn`]: dense tensors and a fully-connected Q-network
//!   with a hand-written backward pass.
//! * [`optim`]: SGD, Adam, RMSProp and Rectified Adam with explicit state.
//! * [`rl`]: toy MDPs, replay buffer, Bellman targets, value iteration.
//! * [`train`]: the iteration driver with the three reset policies.
//! * [`harness`]: grid sweeps, normalized scores, aggregation and AUC.
//! * [`config`]: declarative run configuration with dotted overrides.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod rl;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
