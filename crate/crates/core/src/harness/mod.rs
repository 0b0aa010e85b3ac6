//! Experiment orchestration: configuration, multi-run training campaigns,
//! convergence measurement and PCA fidelity sweeps.

mod campaign;
mod config;
mod convergence;
mod fidelity;

pub use campaign::{
    build_agent, build_scenario, fit_scenario_pca, run_campaign, run_single, write_campaign, AgentSummary,
    CampaignResult, RunResult,
};
pub use config::{AgentOverrides, ConvergenceConfig, ExperimentConfig, NetworkConfig, PcaConfig};
pub use convergence::{episodes_to_threshold, forward_mean, Threshold};
pub use fidelity::{pca_fidelity_report, sample_maps, write_fidelity, FidelityRow};

/// Convergence episodes reported for each agent in the reference study.
pub const REFERENCE_EPISODES: [(&str, usize); 3] = [("etd3", 120), ("td3pca", 300), ("td3", 450)];
/// Reference PCA operating point: variance target, retained fraction, mean MAE (dB).
pub const REFERENCE_PCA: (f64, f64, f64) = (0.995, 0.22, 3.0);
