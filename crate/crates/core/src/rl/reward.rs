use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::world::{Bounds, Position3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { c1: 1.0 / 3.0, c2: 1.0 / 3.0, c3: 1.0 / 3.0 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.c3];
        if all.iter().any(|c| !(*c >= 0.0 && c.is_finite())) || all.iter().sum::<f64>() <= 0.0 {
            return arg(format!("reward weights must be nonnegative with a positive sum, got {self:?}"));
        }
        Ok(())
    }

    pub fn combine(&self, r1: f64, r2: f64, r3: f64) -> f64 {
        self.c1 * r1 + self.c2 * r2 + self.c3 * r3
    }
}

/// Feasibility indicator: 1 when the candidate pose lies inside the flight box.
pub fn compute_r1(candidate: &Position3D, bounds: &Bounds) -> f64 {
    if bounds.contains(candidate) {
        1.0
    } else {
        0.0
    }
}

fn mean_distance(p: &Position3D, users: &[Position3D]) -> f64 {
    users.iter().map(|u| u.distance(p)).sum::<f64>() / users.len() as f64
}

/// Signed proximity reward: `|final - init| / mean user distance at final`,
/// positive when the mean user distance shrank over the step.
pub fn compute_r2(init: &Position3D, fin: &Position3D, users: &[Position3D]) -> Result<f64> {
    if users.is_empty() {
        return arg("r2 needs at least one user");
    }
    let moved = init.distance(fin);
    if moved == 0.0 {
        return Ok(0.0);
    }
    let before = mean_distance(init, users);
    let after = mean_distance(fin, users);
    if after == 0.0 {
        return Err(Error::NonFinite("relay coincides with every user".into()));
    }
    let sign = if after < before { 1.0 } else { -1.0 };
    Ok(sign * moved / after)
}

/// `|min_user_power| / mean(|P_user|)` over the users' received powers (dBm).
pub fn compute_r3(user_powers: &[f64], min_user_power: f64) -> Result<f64> {
    if user_powers.is_empty() {
        return arg("r3 needs at least one user power");
    }
    let mean_abs = user_powers.iter().map(|p| p.abs()).sum::<f64>() / user_powers.len() as f64;
    if mean_abs == 0.0 || !mean_abs.is_finite() {
        return Err(Error::NonFinite(format!("mean |user power| is {mean_abs}")));
    }
    Ok(min_user_power.abs() / mean_abs)
}
