//! Feedback capacity of unifilar finite-state channels.
//!
//! The crate covers the whole pipeline: channel definitions, the belief-state
//! MDP whose average reward is the directed-information rate, a DDPG learner
//! for that MDP, a grid value-iteration baseline, Q-graph extraction from a
//! learned policy, the Q-graph upper bound with its tightness test, and the
//! zero-error feedback coding scheme for the Ising channel.

pub mod baseline;
pub mod belief;
pub mod bounds;
pub mod channels;
pub mod coding;
pub mod ddpg;
pub mod error;
pub mod info;
pub mod qgraph;
pub mod rng;

pub use error::{Error, Result};
