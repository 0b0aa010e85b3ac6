//! Ground-level coverage maps: received power at every terrain node for a
//! given relay pose.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{link_budget, ChannelParams, LinkKind};
use crate::error::{arg, Error, Result};
use crate::world::{Position3D, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Received power in dBm, row-major with rows indexed by `y`.
    pub values: Vec<f64>,
    pub uav_pose: Position3D,
}

impl CoverageMap {
    pub fn new(width: usize, height: usize, cell_size: f64, values: Vec<f64>, uav_pose: Position3D) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!("{} values for a {width}x{height} map", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coverage value".into()));
        }
        Ok(Self { width, height, cell_size, values, uav_pose })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn same_shape(&self, other: &CoverageMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Node index `(i, j)` of the strongest cell (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Scalar aggregate of the map: the sum of per-cell linear powers in mW.
    pub fn total_linear_power_mw(&self) -> f64 {
        self.values.iter().map(|dbm| 10f64.powf(dbm / 10.0)).sum()
    }

    /// Block-averaged resampling to `out_w x out_h` cells (nearest-region mean).
    pub fn downsample(&self, out_w: usize, out_h: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(out_w * out_h);
        for oj in 0..out_h {
            let j0 = oj * self.height / out_h;
            let j1 = ((oj + 1) * self.height / out_h).max(j0 + 1);
            for oi in 0..out_w {
                let i0 = oi * self.width / out_w;
                let i1 = ((oi + 1) * self.width / out_w).max(i0 + 1);
                let mut sum = 0.0;
                for j in j0..j1 {
                    for i in i0..i1 {
                        sum += self.values[j * self.width + i];
                    }
                }
                out.push(sum / ((j1 - j0) * (i1 - i0)) as f64);
            }
        }
        out
    }

    /// CSV export: a `# coverage` header line, then one comma-separated row per `y`.
    pub fn to_csv(&self) -> String {
        let p = self.uav_pose;
        let mut out = format!(
            "# coverage {} {} {} {} {} {}\n",
            self.width, self.height, self.cell_size, p.x, p.y, p.z
        );
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, msg: "empty coverage file".into() })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 8 || parts[0] != "#" || parts[1] != "coverage" {
            return Err(Error::Parse { line: 1, msg: format!("malformed header `{header}`") });
        }
        let num = |k: usize| -> Result<f64> {
            parts[k].parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad header field `{}`", parts[k]) })
        };
        let width = num(2)? as usize;
        let height = num(3)? as usize;
        let pose = Position3D::new(num(5)?, num(6)?, num(7)?);
        let mut values = Vec::with_capacity(width * height);
        for (row, line) in lines.enumerate() {
            for cell in line.split(',') {
                let v = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse { line: row + 2, msg: format!("non-numeric cell `{cell}`") })?;
                values.push(v);
            }
        }
        Self::new(width, height, num(4)?, values, pose)
    }
}

/// Received-power field at user height for the relay at `uav`.
pub fn compute_coverage_map(scenario: &Scenario, uav: &Position3D, params: &ChannelParams) -> Result<CoverageMap> {
    if let Some(v) = scenario.bounds.violation(uav) {
        return Err(Error::Bounds(format!("uav pose violates bounds: {v}")));
    }
    params.validate()?;
    let terrain = &scenario.terrain;
    let (w, h) = (terrain.width(), terrain.height());
    let mut values = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let (x, y) = terrain.node_position(i, j);
            let rx = Position3D::new(x, y, terrain.node(i, j) + scenario.user_height);
            values.push(link_budget(LinkKind::UavToUser, terrain, uav, &rx, params)?.rx_power_dbm);
        }
    }
    CoverageMap::new(w, h, terrain.cell_size(), values, *uav)
}

/// Mean absolute per-cell difference in dB.
pub fn map_mae(a: &CoverageMap, b: &CoverageMap) -> Result<f64> {
    if !a.same_shape(b) {
        return arg(format!("map shapes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height));
    }
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::fspl_uav;
    use crate::world::{Bounds, TerrainGrid};

    fn flat_scenario() -> Scenario {
        let terrain = TerrainGrid::flat(9, 9, 64.0, 0.0).unwrap();
        let bounds = Bounds::over_terrain(&terrain, 10.0, 300.0);
        Scenario {
            bs: Position3D::new(0.0, 0.0, 10.0),
            users: vec![Position3D::new(64.0, 64.0, 1.5)],
            uav_init: bounds.center(),
            bounds,
            terrain,
            max_user_spread: 10_000.0,
            user_height: 1.5,
        }
    }

    #[test]
    fn cell_beneath_uav_matches_single_link() {
        let s = flat_scenario();
        let uav = Position3D::new(256.0, 256.0, 101.5);
        let p = ChannelParams::default();
        let map = compute_coverage_map(&s, &uav, &p).unwrap();
        let expected = 36.98 + fspl_uav(100.0, 2.4e9).unwrap();
        assert!((map.at(4, 4) - expected).abs() < 1e-9);
        assert_eq!(map.argmax(), (4, 4));
    }

    #[test]
    fn out_of_bounds_pose_rejected() {
        let s = flat_scenario();
        let err = compute_coverage_map(&s, &Position3D::new(10.0, 10.0, 400.0), &ChannelParams::default());
        assert!(matches!(err, Err(Error::Bounds(m)) if m.contains("z_max")));
    }

    #[test]
    fn mae_examples() {
        let pose = Position3D::new(0.0, 0.0, 0.0);
        let a = CoverageMap::new(2, 1, 1.0, vec![0.0, 2.0], pose).unwrap();
        let b = CoverageMap::new(2, 1, 1.0, vec![1.0, 5.0], pose).unwrap();
        assert_eq!(map_mae(&a, &b).unwrap(), 2.0);
        assert_eq!(map_mae(&a, &a).unwrap(), 0.0);
        let c = CoverageMap::new(1, 2, 1.0, vec![0.0, 2.0], pose).unwrap();
        assert!(map_mae(&a, &c).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = flat_scenario();
        let map = compute_coverage_map(&s, &Position3D::new(100.0, 300.0, 55.0), &ChannelParams::default()).unwrap();
        let csv = map.to_csv();
        assert!(csv.starts_with("# coverage 9 9 64 100 300 55\n"));
        assert_eq!(CoverageMap::from_csv(&csv).unwrap(), map);
    }

    #[test]
    fn downsample_of_constant_is_constant() {
        let m = CoverageMap::new(5, 5, 1.0, vec![-70.0; 25], Position3D::new(0.0, 0.0, 0.0)).unwrap();
        assert!(m.downsample(3, 2).iter().all(|&v| v == -70.0));
    }
}
