use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::reward::{compute_r1, compute_r2, compute_r3, RewardWeights};
use super::Observation;
use crate::channel::{link_budget, ChannelParams, LinkKind};
use crate::coverage::{compute_coverage_map, CoverageMap};
use crate::error::{arg, Error, Result};
use crate::pca::PcaModel;
use crate::world::{Position3D, Scenario};

/// Offset and scale applied to raw dBm maps before they reach a network.
const MAP_OFFSET_DBM: f64 = -90.0;
const MAP_SCALE_DB: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Per-axis displacement limit, meters.
    pub max_step: f64,
    pub episode_len: usize,
    /// Receiver sensitivity floor used by the power reward, dBm.
    pub min_user_power_dbm: f64,
    pub weights: RewardWeights,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { max_step: 50.0, episode_len: 100, min_user_power_dbm: -90.0, weights: RewardWeights::default() }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return arg(format!("max_step must be positive, got {}", self.max_step));
        }
        if self.episode_len == 0 {
            return arg("episode_len must be >= 1");
        }
        if !self.min_user_power_dbm.is_finite() {
            return arg("min_user_power_dbm must be finite");
        }
        self.weights.validate()
    }
}

/// How a coverage map becomes the image part of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateEncoding {
    /// Block-averaged map of `height x width` cells, single frame.
    RawMap { height: usize, width: usize },
    /// Stack of the last `frames` PCA score vectors, one per image row.
    Pca { frames: usize },
}

#[derive(Debug, Clone)]
pub struct ObservationEncoder {
    encoding: StateEncoding,
    pca: Option<Arc<PcaModel>>,
    score_scale: f64,
    image_h: usize,
    image_w: usize,
}

impl ObservationEncoder {
    /// `min_input` is the smallest image the consuming network accepts; smaller
    /// encodings are zero-padded on the bottom and right.
    pub fn new(encoding: StateEncoding, pca: Option<Arc<PcaModel>>, min_input: (usize, usize)) -> Result<Self> {
        let (rows, cols) = match encoding {
            StateEncoding::RawMap { height, width } => {
                if height == 0 || width == 0 {
                    return arg("raw map size must be positive");
                }
                (height, width)
            }
            StateEncoding::Pca { frames } => {
                let model = pca.as_ref().ok_or_else(|| Error::Usage("PCA encoding needs a fitted model".into()))?;
                if model.k == 0 {
                    return Err(Error::Usage("PCA model retains no components".into()));
                }
                if frames == 0 {
                    return arg("frame stack depth must be >= 1");
                }
                (frames, model.k)
            }
        };
        let score_scale = pca.as_ref().and_then(|m| m.eigenvalues.first()).map_or(1.0, |ev| ev.sqrt().max(1e-12));
        Ok(Self {
            encoding,
            pca,
            score_scale,
            image_h: rows.max(min_input.0),
            image_w: cols.max(min_input.1),
        })
    }

    pub fn encoding(&self) -> StateEncoding {
        self.encoding
    }

    pub fn pca(&self) -> Option<&Arc<PcaModel>> {
        self.pca.as_ref()
    }

    /// Image shape `(height, width)` after padding.
    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    pub fn depth(&self) -> usize {
        match self.encoding {
            StateEncoding::RawMap { .. } => 1,
            StateEncoding::Pca { frames } => frames,
        }
    }

    /// Per-frame features of one coverage map: normalized downsampled cells,
    /// or PCA scores divided by the square root of the leading eigenvalue.
    pub fn frame(&self, map: &CoverageMap) -> Result<Vec<f64>> {
        match self.encoding {
            StateEncoding::RawMap { height, width } => Ok(map
                .downsample(width, height)
                .into_iter()
                .map(|v| (v - MAP_OFFSET_DBM) / MAP_SCALE_DB)
                .collect()),
            StateEncoding::Pca { .. } => {
                let model = self.pca.as_ref().expect("checked at construction");
                let scores = model.project(map)?.scores;
                Ok(scores.into_iter().map(|s| s / self.score_scale).collect())
            }
        }
    }

    /// Lays frames out row-wise (raw maps fill their own grid) and zero-pads.
    pub fn image(&self, frames: &[Vec<f64>]) -> Vec<f64> {
        let mut img = vec![0.0; self.image_h * self.image_w];
        match self.encoding {
            StateEncoding::RawMap { height, width } => {
                for r in 0..height {
                    img[r * self.image_w..r * self.image_w + width]
                        .copy_from_slice(&frames[0][r * width..(r + 1) * width]);
                }
            }
            StateEncoding::Pca { .. } => {
                for (r, f) in frames.iter().enumerate() {
                    img[r * self.image_w..r * self.image_w + f.len()].copy_from_slice(f);
                }
            }
        }
        img
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub uav: Position3D,
    /// Most recent frame last.
    pub frames: Vec<Vec<f64>>,
    /// Normalized positions: relay, base station, then every user.
    pub aux: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// Pose before clamping into bounds.
    pub candidate: Position3D,
    pub user_powers_dbm: Vec<f64>,
    pub bs_link_dbm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodic relay-positioning task over a fixed scenario.
#[derive(Debug, Clone)]
pub struct RelayEnv {
    scenario: Arc<Scenario>,
    config: EnvConfig,
    channel: ChannelParams,
    encoder: ObservationEncoder,
}

impl RelayEnv {
    pub fn new(scenario: Arc<Scenario>, config: EnvConfig, channel: ChannelParams, encoder: ObservationEncoder) -> Result<Self> {
        config.validate()?;
        channel.validate()?;
        if let Some(model) = encoder.pca() {
            let t = &scenario.terrain;
            if model.width != t.width() || model.height != t.height() {
                return Err(Error::Usage(format!(
                    "PCA model fitted on {}x{} maps, scenario terrain is {}x{}",
                    model.width,
                    model.height,
                    t.width(),
                    t.height()
                )));
            }
        }
        Ok(Self { scenario, config, channel, encoder })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn encoder(&self) -> &ObservationEncoder {
        &self.encoder
    }

    /// Length of the auxiliary position vector, `3 (2 + users)`.
    pub fn aux_len(&self) -> usize {
        3 * (2 + self.scenario.users.len())
    }

    fn aux_for(&self, uav: &Position3D) -> Vec<f64> {
        let b = &self.scenario.bounds;
        let mut aux = Vec::with_capacity(self.aux_len());
        aux.extend(b.normalize(uav));
        aux.extend(b.normalize(&self.scenario.bs));
        for u in &self.scenario.users {
            aux.extend(b.normalize(u));
        }
        aux
    }

    /// Relay back at its initial pose with the frame stack filled by copies of
    /// the initial frame.
    pub fn reset(&self) -> Result<EnvState> {
        let uav = self.scenario.uav_init;
        let map = compute_coverage_map(&self.scenario, &uav, &self.channel)?;
        let frame = self.encoder.frame(&map)?;
        Ok(EnvState { uav, frames: vec![frame; self.encoder.depth()], aux: self.aux_for(&uav), step_index: 0 })
    }

    pub fn observation(&self, state: &EnvState) -> Observation {
        Observation { image: self.encoder.image(&state.frames), aux: state.aux.clone() }
    }

    pub fn user_powers(&self, uav: &Position3D) -> Result<Vec<f64>> {
        self.scenario
            .users
            .iter()
            .map(|u| Ok(link_budget(LinkKind::UavToUser, &self.scenario.terrain, uav, u, &self.channel)?.rx_power_dbm))
            .collect()
    }

    /// Applies a displacement (meters, clamped per axis to `max_step`).
    pub fn step(&self, state: &EnvState, action: [f64; 3]) -> Result<Step> {
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        let m = self.config.max_step;
        let d = action.map(|a| a.clamp(-m, m));
        let candidate = Position3D::new(state.uav.x + d[0], state.uav.y + d[1], state.uav.z + d[2]);
        let bounds = &self.scenario.bounds;
        let r1 = compute_r1(&candidate, bounds);
        let uav = bounds.clamp(&candidate);

        let map = compute_coverage_map(&self.scenario, &uav, &self.channel)?;
        let mut frames = state.frames[1..].to_vec();
        frames.push(self.encoder.frame(&map)?);

        let r2 = compute_r2(&state.uav, &uav, &self.scenario.users)?;
        let user_powers_dbm = self.user_powers(&uav)?;
        let r3 = compute_r3(&user_powers_dbm, self.config.min_user_power_dbm)?;
        let reward = self.config.weights.combine(r1, r2, r3);
        let bs_link_dbm =
            link_budget(LinkKind::BsToUav, &self.scenario.terrain, &self.scenario.bs, &uav, &self.channel)?.rx_power_dbm;

        let step_index = state.step_index + 1;
        Ok(Step {
            state: EnvState { uav, frames, aux: self.aux_for(&uav), step_index },
            reward,
            done: step_index >= self.config.episode_len,
            info: StepInfo { r1, r2, r3, candidate, user_powers_dbm, bs_link_dbm },
        })
    }
}
