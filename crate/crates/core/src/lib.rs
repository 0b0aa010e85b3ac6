//! A desk-scale laboratory for UAV relay path planning.
//!
//! The crate covers the full stack: synthetic terrain and scenario placement
//! ([`world`]), a terrain-aware link model ([`channel`]), ground coverage maps
//! ([`coverage`]), PCA compression of those maps ([`pca`]), a small neural
//! network kernel with exact backpropagation ([`nn`]), prioritized replay
//! ([`replay`]), the relay MDP and TD3-family agents ([`rl`]) and experiment
//! orchestration ([`harness`]).
//!
//! The runnable programs under `examples/` walk through each capability; the
//! `uavlab` binary wraps the campaign-level operations.

pub mod channel;
pub mod cli;
pub mod coverage;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pca;
pub mod replay;
pub mod rl;
pub mod world;

pub use error::{Error, Result};
