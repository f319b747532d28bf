//! Hybrid actor-critic training stack.

pub mod nn;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod trainer;
pub mod checkpoint;

pub use policy::{call_from_theta, PolicyNet, SampledAction, ACTION_DIM};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{SacAgent, SacHyper};
pub use trainer::{EpochRecord, Trainer};
