//! The relay MDP and the TD3-family agents.
//!
//! [`RelayEnv`] turns a [`Scenario`](crate::world::Scenario) into an episodic
//! task: the relay moves by bounded displacements, every pose yields a fresh
//! coverage map, and the observation is either a downsampled raw map or a
//! stack of PCA score vectors, alongside normalized positions.
//! [`Td3Agent`] implements twin critics with clipped double-Q targets, target
//! policy smoothing and delayed actor updates; the E-TD3 variant adds
//! prioritized replay and a Huber critic loss.

mod agent;
mod env;
mod reward;
mod train;

pub use agent::{AgentKind, Hyper, HyperOverride, Td3Agent, TrainDiagnostics};
pub use env::{EnvConfig, EnvState, ObservationEncoder, RelayEnv, StateEncoding, Step, StepInfo};
pub use reward::{compute_r1, compute_r2, compute_r3, RewardWeights};
pub use train::{train_agent, EpisodeLog};

/// Network input for one state: an image (flattened `[1, H, W]`) and the
/// auxiliary vector joined after the convolution stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image: Vec<f64>,
    pub aux: Vec<f64>,
}
