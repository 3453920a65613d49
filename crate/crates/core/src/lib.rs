//! Hyper-actor soft actor-critic.
//!
//! Building blocks for training SAC agents on a small kinematic manipulation
//! suite and transferring their policies across modules and tasks through
//! shared "hyper-actor" networks.

pub mod env;
pub mod error;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod sac;

pub use error::{Error, Result};
pub mod checkpoint;
pub mod hasac;
pub mod metrics;
pub mod train;
