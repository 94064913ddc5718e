//! Meta-critic learning core.
//!
//! A shared task-and-actor-conditioned value network (the meta-value network,
//! MVN) and a recurrent task-actor encoder (TAEN) are trained across many
//! tasks; at test time the frozen pair supervises a freshly initialised actor
//! on an unseen task from a handful of examples or interactions.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the experiment CLI live in the `metacritic` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod baselines;
pub mod gradsuite;
mod error;
pub mod metacritic;
pub mod nets;
pub mod rng;
pub mod tasks;

pub use error::{Error, Result};
