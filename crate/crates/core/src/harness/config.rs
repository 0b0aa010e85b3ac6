use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelParams;
use crate::error::{arg, Result};
use crate::nn::NetworkSpec;
use crate::rl::{AgentKind, EnvConfig, Hyper, HyperOverride};
use crate::world::{PlacementParams, TerrainParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    /// Cumulative explained-variance target used for the agents' state.
    pub variance_target: f64,
    /// Relay poses sampled uniformly in bounds to fit each scenario's basis.
    pub warmup_maps: usize,
    /// Frame stack depth of the E-TD3 state.
    pub frames: usize,
    /// Maps per fidelity batch.
    pub fidelity_batch: usize,
    pub fidelity_targets: Vec<f64>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            variance_target: 0.995,
            warmup_maps: 128,
            frames: 4,
            fidelity_batch: 100,
            fidelity_targets: vec![0.96, 0.98, 0.995],
        }
    }
}

/// Shape of the actor and critic networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `(out_channels, kernel, stride)` per convolution.
    pub convs: Vec<(usize, usize, usize)>,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Raw-map downsample `(height, width)` for the baseline agent.
    pub raw_map: (usize, usize),
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { convs: vec![(8, 4, 2), (16, 2, 1), (16, 1, 1)], hidden: vec![64, 64, 64], leaky_slope: 0.01, raw_map: (12, 12) }
    }
}

impl NetworkConfig {
    /// The reference layer stack: 32/64/64 filters, 512/256/256 dense units.
    pub fn reference() -> Self {
        Self { convs: vec![(32, 4, 2), (64, 2, 1), (64, 1, 1)], hidden: vec![512, 256, 256], leaky_slope: 0.01, raw_map: (30, 30) }
    }

    pub fn spec(&self, image: (usize, usize), aux_len: usize, out_units: usize) -> NetworkSpec {
        NetworkSpec::conv_mlp([1, image.0, image.1], &self.convs, &self.hidden, aux_len, out_units, self.leaky_slope)
    }

    /// Smallest image the convolution stack accepts.
    pub fn min_input(&self) -> (usize, usize) {
        self.spec((1, 1), 0, 1).min_input()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub window: usize,
    /// Fraction of the plateau that counts as converged.
    pub theta: f64,
    /// Trailing episodes averaged for the final-reward figure.
    pub final_window: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { window: 10, theta: 0.9, final_window: 50 }
    }
}

/// Per-agent hyperparameter overrides on top of the reference table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentOverrides {
    pub all: HyperOverride,
    pub td3: HyperOverride,
    pub td3pca: HyperOverride,
    pub etd3: HyperOverride,
}

impl AgentOverrides {
    pub fn hyper(&self, kind: AgentKind) -> Hyper {
        let mut h = Hyper::reference(kind);
        h.apply(&self.all);
        h.apply(match kind {
            AgentKind::Td3 => &self.td3,
            AgentKind::Td3Pca => &self.td3pca,
            AgentKind::Etd3 => &self.etd3,
        });
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agents: Vec<AgentKind>,
    pub runs: usize,
    pub episodes: usize,
    pub seed_base: u64,
    /// Reuse the `seed_base` scenario for every run instead of drawing one per run.
    pub fixed_scenario: bool,
    pub terrain: TerrainParams,
    pub placement: PlacementParams,
    /// Relay altitude band in meters.
    pub z_range: (f64, f64),
    pub channel: ChannelParams,
    pub env: EnvConfig,
    pub pca: PcaConfig,
    pub network: NetworkConfig,
    pub hyper: AgentOverrides,
    pub convergence: ConvergenceConfig,
    /// Worker threads for independent runs.
    pub parallel: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agents: AgentKind::ALL.to_vec(),
            runs: 10,
            episodes: 150,
            seed_base: 1,
            fixed_scenario: false,
            terrain: TerrainParams::default(),
            placement: PlacementParams::default(),
            z_range: (10.0, 300.0),
            channel: ChannelParams::default(),
            env: EnvConfig::default(),
            pca: PcaConfig::default(),
            network: NetworkConfig::default(),
            hyper: AgentOverrides::default(),
            convergence: ConvergenceConfig::default(),
            parallel: 1,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return arg("agents must list at least one kind");
        }
        if self.runs == 0 || self.episodes == 0 {
            return arg("runs and episodes must be >= 1");
        }
        let (lo, hi) = self.z_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return arg(format!("z_range must be an ordered pair, got {:?}", self.z_range));
        }
        let p = &self.pca;
        if !(p.variance_target > 0.0 && p.variance_target <= 1.0) {
            return arg(format!("pca.variance_target must be in (0, 1], got {}", p.variance_target));
        }
        if p.fidelity_targets.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return arg("pca.fidelity_targets must lie in (0, 1]");
        }
        if p.warmup_maps < 2 || p.fidelity_batch < 2 || p.frames == 0 {
            return arg("pca.warmup_maps and pca.fidelity_batch must be >= 2, pca.frames >= 1");
        }
        let c = &self.convergence;
        if c.window == 0 || c.final_window == 0 || !(c.theta > 0.0 && c.theta <= 1.0) {
            return arg("convergence.window >= 1 and convergence.theta in (0, 1]");
        }
        if self.network.convs.is_empty() || self.network.raw_map.0 == 0 || self.network.raw_map.1 == 0 {
            return arg("network needs at least one convolution and a positive raw_map");
        }
        self.env.validate()?;
        self.channel.validate()?;
        for kind in AgentKind::ALL {
            self.hyper.hyper(kind).validate()?;
        }
        Ok(())
    }
}
