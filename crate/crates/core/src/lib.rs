//! Off-policy reinforcement learning that also learns from action-free
//! observation trajectories. A shared encoder feeds a soft actor-critic
//! learner; an inverse dynamics model labels observation state pairs with
//! actions, trajectory-final pairs receive a large constant reward, and a
//! discriminator plus a small paired dataset align features across the
//! interaction and observer domains.
//!
//! The crate is split into the numeric core (`nn`), toy environments (`env`),
//! replay pools and datasets (`data`), the SAC learner (`sac`), the joint
//! training step (`rlv`), and the experiment harness with its CLI (`harness`).
//! Everything is f64, single-threaded per run, and bitwise reproducible from
//! a seed.

pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rlv;
pub mod sac;

pub use error::{Result, RlvError};
