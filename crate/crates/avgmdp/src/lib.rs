//! Average-reward tabular MDPs with Bernoulli rewards: exact gains, biases and
//! gaps, invariant measures, leveling, instance-dependent regret lower bounds
//! and the ECoE* learner with a reproducible simulation harness.

pub mod chain;
pub mod deviation;
pub mod error;
pub mod io;
pub mod learner;
pub mod leveling;
pub mod lowerbound;
pub mod measures;
pub mod model;
pub mod qp;
pub mod sim;
pub mod solve;
pub mod structural;
pub mod verify;
pub mod zoo;

pub use error::{MdpError, Result};
pub use model::{KernelSpace, MdpBuilder, MdpModel, PairId, Policy, StateId};
