//! Link gains between the base station, the relay and ground users.
//!
//! Every term is a signed gain in dB: losses are negative, so a link's total
//! gain is the plain sum `pl_db + ked_db + veg_db`.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::world::{Position3D, TerrainGrid};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Knife-edge parameter below which diffraction loss is taken as zero.
pub const KED_V_THRESHOLD: f64 = -0.78;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Carrier frequency, Hz.
    pub fc: f64,
    pub tx_power_uav_dbm: f64,
    pub tx_power_bs_dbm: f64,
    /// Absorption applied to users standing in forest, dB (positive magnitude).
    pub veg_loss_db: f64,
    /// Fraction of the first Fresnel radius that must stay clear of terrain.
    pub fresnel_clearance: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            fc: 2.4e9,
            tx_power_uav_dbm: 36.98,
            tx_power_bs_dbm: 36.98,
            veg_loss_db: 5.0,
            fresnel_clearance: 0.6,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fc > 0.0 && self.fc.is_finite()) {
            return arg(format!("carrier frequency must be positive, got {}", self.fc));
        }
        if !(self.fresnel_clearance > 0.0 && self.fresnel_clearance <= 1.0) {
            return arg(format!("fresnel_clearance must lie in (0, 1], got {}", self.fresnel_clearance));
        }
        if !(self.veg_loss_db >= 0.0 && self.veg_loss_db.is_finite()) {
            return arg("veg_loss_db must be a finite nonnegative value");
        }
        if !self.tx_power_bs_dbm.is_finite() || !self.tx_power_uav_dbm.is_finite() {
            return arg("transmit powers must be finite");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    BsToUav,
    UavToUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub pl_db: f64,
    pub ked_db: f64,
    pub veg_db: f64,
    pub gain_db: f64,
    pub rx_power_dbm: f64,
}

fn check_fspl_args(d: f64, fc: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return arg(format!("distance must be positive, got {d}"));
    }
    if !(fc > 0.0 && fc.is_finite()) {
        return arg(format!("carrier frequency must be positive, got {fc}"));
    }
    Ok(())
}

/// Free-space gain of the base-station link.
pub fn fspl_bs(d: f64, fc: f64) -> Result<f64> {
    check_fspl_args(d, fc)?;
    Ok(-(20.0 * d.log10() + 20.0 * fc.log10() - 147.55))
}

/// Free-space gain of the relay-to-user link.
pub fn fspl_uav(d: f64, fc: f64) -> Result<f64> {
    check_fspl_args(d, fc)?;
    Ok(-(21.3 * d.log10() + 21.3 * fc.log10() - 157.2))
}

/// Single knife-edge loss `J(v)` in dB (positive magnitude).
pub fn knife_edge_j(v: f64) -> f64 {
    if v <= KED_V_THRESHOLD {
        0.0
    } else {
        let a = v - 0.1;
        6.9 + 20.0 * ((a * a + 1.0).sqrt() + a).log10()
    }
}

/// Terrain diffraction gain (≤ 0 dB) along the `tx -> rx` ray.
///
/// The ground track is sampled once per crossed cell. A sample obstructs the
/// link when terrain rises above the line of sight minus `clearance` times
/// the local first-Fresnel radius. Consecutive obstructing samples form one
/// edge whose Fresnel-Kirchhoff parameter is the largest among them; edge
/// losses are summed.
pub fn ked_loss(terrain: &TerrainGrid, tx: &Position3D, rx: &Position3D, fc: f64, clearance: f64) -> Result<f64> {
    if !(fc > 0.0 && fc.is_finite()) {
        return arg(format!("carrier frequency must be positive, got {fc}"));
    }
    if !(clearance > 0.0 && clearance <= 1.0) {
        return arg(format!("clearance must lie in (0, 1], got {clearance}"));
    }
    if !tx.is_finite() || !rx.is_finite() {
        return Err(Error::NonFinite("link endpoint".into()));
    }
    if tx.distance(rx) == 0.0 {
        return arg("zero-length link");
    }
    for (name, p) in [("tx", tx), ("rx", rx)] {
        if !terrain.in_extent(p.x, p.y) {
            return Err(Error::Bounds(format!("{name} ({}, {}) outside terrain extent", p.x, p.y)));
        }
    }
    Ok(-ked_profile(terrain, tx, rx, SPEED_OF_LIGHT / fc, clearance))
}

/// Sum of edge losses (positive dB). Endpoints must already be validated.
fn ked_profile(terrain: &TerrainGrid, tx: &Position3D, rx: &Position3D, lambda: f64, clearance: f64) -> f64 {
    let dx = rx.x - tx.x;
    let dy = rx.y - tx.y;
    let dz = rx.z - tx.z;
    let horizontal = dx.hypot(dy);
    let n = (horizontal / terrain.cell_size()).ceil() as usize;
    if n < 2 {
        return 0.0;
    }
    let (max_x, max_y) = (terrain.extent_x(), terrain.extent_y());
    let mut total = 0.0;
    let mut edge: Option<f64> = None;
    for i in 1..n {
        let t = i as f64 / n as f64;
        let x = (tx.x + t * dx).clamp(0.0, max_x);
        let y = (tx.y + t * dy).clamp(0.0, max_y);
        let ground = terrain.bilinear(x, y);
        let los = tx.z + t * dz;
        let d1 = t * horizontal;
        let d2 = (1.0 - t) * horizontal;
        let fresnel = (lambda * d1 * d2 / (d1 + d2)).sqrt();
        let excess = ground - los;
        if excess > -clearance * fresnel {
            let v = excess * (2.0 / lambda * (1.0 / d1 + 1.0 / d2)).sqrt();
            edge = Some(edge.map_or(v, |m: f64| m.max(v)));
        } else if let Some(v) = edge.take() {
            total += knife_edge_j(v);
        }
    }
    if let Some(v) = edge {
        total += knife_edge_j(v);
    }
    total
}

/// Vegetation gain for a ground receiver: `-veg_loss_db` on forest, else 0.
pub fn vegetation_loss(terrain: &TerrainGrid, user: &Position3D, params: &ChannelParams) -> Result<f64> {
    if terrain.forest_at(user.x, user.y)? {
        Ok(-params.veg_loss_db)
    } else {
        Ok(0.0)
    }
}

/// Full budget of one link.
pub fn link_budget(
    kind: LinkKind,
    terrain: &TerrainGrid,
    tx: &Position3D,
    rx: &Position3D,
    params: &ChannelParams,
) -> Result<LinkBudget> {
    let d = tx.distance(rx);
    let (pl_db, tx_power) = match kind {
        LinkKind::BsToUav => (fspl_bs(d, params.fc)?, params.tx_power_bs_dbm),
        LinkKind::UavToUser => (fspl_uav(d, params.fc)?, params.tx_power_uav_dbm),
    };
    let ked_db = ked_loss(terrain, tx, rx, params.fc, params.fresnel_clearance)?;
    let veg_db = match kind {
        LinkKind::UavToUser => vegetation_loss(terrain, rx, params)?,
        LinkKind::BsToUav => 0.0,
    };
    let gain_db = pl_db + ked_db + veg_db;
    Ok(LinkBudget { pl_db, ked_db, veg_db, gain_db, rx_power_dbm: tx_power + gain_db })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Oracle values below were evaluated independently (mpmath, 30 digits):
    //   -(20 log10(1000) + 20 log10(2.4e9) - 147.55) = -100.0542248342...
    //   -(21.3 log10(1000) + 21.3 log10(2.4e9) - 157.2) = -106.4984994484...
    #[test]
    fn fspl_reference_values() {
        assert!((fspl_bs(1000.0, 2.4e9).unwrap() - -100.054_224_834).abs() < 1e-6);
        assert!((fspl_uav(1000.0, 2.4e9).unwrap() - -106.498_499_448).abs() < 1e-6);
    }

    #[test]
    fn fspl_zero_crossings() {
        // 20 log10(d fc) = 147.55  <=>  d fc = 10^7.3775
        assert!(fspl_bs(1.0, 10f64.powf(7.3775)).unwrap().abs() < 1e-9);
        // 21.3 log10(d fc) = 157.2  <=>  d fc = 10^(157.2 / 21.3)
        let root = 10f64.powf(157.2 / 21.3) / 2.4e9;
        assert!(fspl_uav(root, 2.4e9).unwrap().abs() < 1e-9);
    }

    #[test]
    fn fspl_rejects_nonpositive() {
        assert!(fspl_bs(0.0, 2.4e9).is_err());
        assert!(fspl_bs(10.0, -1.0).is_err());
        assert!(fspl_uav(-3.0, 2.4e9).is_err());
    }

    #[test]
    fn knife_edge_reference_points() {
        // mpmath: J(0) = 6.9 + 20 log10(sqrt(1.01) - 0.1) = 6.0328522...
        assert!((knife_edge_j(0.0) - 6.032_852_2).abs() < 1e-5);
        assert_eq!(knife_edge_j(KED_V_THRESHOLD), 0.0);
        assert!(knife_edge_j(KED_V_THRESHOLD + 1e-6).abs() < 1e-2);
        assert!(knife_edge_j(2.0) > knife_edge_j(1.0));
    }

    #[test]
    fn vegetation_by_mask() {
        let mut t = TerrainGrid::flat(3, 3, 10.0, 0.0).unwrap();
        t.set_forest(1, 1, true);
        let p = ChannelParams::default();
        assert_eq!(vegetation_loss(&t, &Position3D::new(10.0, 10.0, 1.5), &p).unwrap(), -5.0);
        assert_eq!(vegetation_loss(&t, &Position3D::new(0.0, 0.0, 1.5), &p).unwrap(), 0.0);
        let none = ChannelParams { veg_loss_db: 0.0, ..p };
        assert_eq!(vegetation_loss(&t, &Position3D::new(10.0, 10.0, 1.5), &none).unwrap(), 0.0);
        assert!(vegetation_loss(&t, &Position3D::new(30.0, 0.0, 1.5), &p).is_err());
    }

    #[test]
    fn zero_length_link_rejected() {
        let t = TerrainGrid::flat(3, 3, 10.0, 0.0).unwrap();
        let p = Position3D::new(5.0, 5.0, 20.0);
        assert!(ked_loss(&t, &p, &p, 2.4e9, 0.6).is_err());
    }
}
