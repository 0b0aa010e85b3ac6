//! Environment geometry: terrain elevation, forest cover and the placement of
//! the base station, ground users and the relay UAV.
//!
//! Terrain samples live on grid nodes. Node `(i, j)` sits at
//! `(i * cell_size, j * cell_size)`, so a `w x h` grid spans
//! `[0, (w - 1) * cell_size] x [0, (h - 1) * cell_size]`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// Default ground-user antenna height above terrain, meters.
pub const USER_HEIGHT: f64 = 1.5;
/// Default base-station mast height above terrain, meters.
pub const BS_HEIGHT: f64 = 10.0;
/// Default cap on the pairwise horizontal distance between users, meters.
pub const MAX_USER_SPREAD: f64 = 10_000.0;
/// Rejection-sampling budget for user placement.
pub const PLACEMENT_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Position3D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Axis-aligned box bounding the relay's flight volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return arg("bounds must be finite");
        }
        if self.x_min > self.x_max || self.y_min > self.y_max || self.z_min > self.z_max {
            return arg(format!("bounds are inverted: {self:?}"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position3D) -> bool {
        self.violation(p).is_none()
    }

    /// Names the first violated bound, if any.
    pub fn violation(&self, p: &Position3D) -> Option<String> {
        let checks = [
            (p.x < self.x_min, format!("x={} < x_min={}", p.x, self.x_min)),
            (p.x > self.x_max, format!("x={} > x_max={}", p.x, self.x_max)),
            (p.y < self.y_min, format!("y={} < y_min={}", p.y, self.y_min)),
            (p.y > self.y_max, format!("y={} > y_max={}", p.y, self.y_max)),
            (p.z < self.z_min, format!("z={} < z_min={}", p.z, self.z_min)),
            (p.z > self.z_max, format!("z={} > z_max={}", p.z, self.z_max)),
        ];
        if !p.is_finite() {
            return Some("position is not finite".into());
        }
        checks.into_iter().find(|(bad, _)| *bad).map(|(_, m)| m)
    }

    pub fn clamp(&self, p: &Position3D) -> Position3D {
        Position3D {
            x: p.x.clamp(self.x_min, self.x_max),
            y: p.y.clamp(self.y_min, self.y_max),
            z: p.z.clamp(self.z_min, self.z_max),
        }
    }

    pub fn center(&self) -> Position3D {
        Position3D {
            x: 0.5 * (self.x_min + self.x_max),
            y: 0.5 * (self.y_min + self.y_max),
            z: 0.5 * (self.z_min + self.z_max),
        }
    }

    /// Maps a position to `[0, 1]^3` relative to the box. Degenerate axes map to 0.5.
    pub fn normalize(&self, p: &Position3D) -> [f64; 3] {
        fn axis(v: f64, lo: f64, hi: f64) -> f64 {
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.5
            }
        }
        [
            axis(p.x, self.x_min, self.x_max),
            axis(p.y, self.y_min, self.y_max),
            axis(p.z, self.z_min, self.z_max),
        ]
    }

    /// The whole horizontal extent of `terrain` with the given altitude band.
    pub fn over_terrain(terrain: &TerrainGrid, z_min: f64, z_max: f64) -> Self {
        Self {
            x_min: 0.0,
            x_max: terrain.extent_x(),
            y_min: 0.0,
            y_max: terrain.extent_y(),
            z_min,
            z_max,
        }
    }
}

/// Elevation grid with a companion forest mask, both row-major with rows
/// indexed by `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    elevations: Vec<f64>,
    forest: Vec<bool>,
}

impl TerrainGrid {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        elevations: Vec<f64>,
        forest: Vec<bool>,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return arg(format!("terrain must be at least 2x2, got {width}x{height}"));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return arg(format!("cell_size must be positive, got {cell_size}"));
        }
        let n = width * height;
        if elevations.len() != n || forest.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} cells, got {} elevations and {} mask cells",
                elevations.len(),
                forest.len()
            )));
        }
        if let Some(bad) = elevations.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("elevation at cell {bad}")));
        }
        Ok(Self { width, height, cell_size, elevations, forest })
    }

    /// Constant-elevation terrain without forest.
    pub fn flat(width: usize, height: usize, cell_size: f64, elevation: f64) -> Result<Self> {
        Self::new(width, height, cell_size, vec![elevation; width * height], vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn extent_x(&self) -> f64 {
        (self.width - 1) as f64 * self.cell_size
    }

    pub fn extent_y(&self) -> f64 {
        (self.height - 1) as f64 * self.cell_size
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn forest_mask(&self) -> &[bool] {
        &self.forest
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.elevations[j * self.width + i]
    }

    pub fn is_forest(&self, i: usize, j: usize) -> bool {
        self.forest[j * self.width + i]
    }

    pub fn set_forest(&mut self, i: usize, j: usize, value: bool) {
        self.forest[j * self.width + i] = value;
    }

    pub fn set_node(&mut self, i: usize, j: usize, value: f64) {
        self.elevations[j * self.width + i] = value;
    }

    /// Elevations as nested rows.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.elevations.chunks(self.width).map(<[f64]>::to_vec).collect()
    }

    /// World coordinates of node `(i, j)`.
    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.cell_size, j as f64 * self.cell_size)
    }

    pub fn in_extent(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.extent_x() && y <= self.extent_y()
    }

    /// Bilinear interpolation of the four nodes surrounding `(x, y)`.
    pub fn elevation_at(&self, x: f64, y: f64) -> Result<f64> {
        if !self.in_extent(x, y) {
            return Err(Error::Bounds(format!(
                "({x}, {y}) outside terrain extent [0, {}] x [0, {}]",
                self.extent_x(),
                self.extent_y()
            )));
        }
        Ok(self.bilinear(x, y))
    }

    pub(crate) fn bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x / self.cell_size;
        let fy = y / self.cell_size;
        let i0 = (fx.floor() as usize).min(self.width - 2);
        let j0 = (fy.floor() as usize).min(self.height - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let w = self.width;
        let e = &self.elevations;
        let z00 = e[j0 * w + i0];
        let z10 = e[j0 * w + i0 + 1];
        let z01 = e[(j0 + 1) * w + i0];
        let z11 = e[(j0 + 1) * w + i0 + 1];
        let bottom = z00 + (z10 - z00) * tx;
        let top = z01 + (z11 - z01) * tx;
        bottom + (top - bottom) * ty
    }

    /// Forest flag of the node nearest to `(x, y)`.
    pub fn forest_at(&self, x: f64, y: f64) -> Result<bool> {
        if !self.in_extent(x, y) {
            return Err(Error::Bounds(format!("({x}, {y}) outside terrain extent")));
        }
        let i = ((x / self.cell_size).round() as usize).min(self.width - 1);
        let j = ((y / self.cell_size).round() as usize).min(self.height - 1);
        Ok(self.is_forest(i, j))
    }

    /// Copy mirrored about the horizontal mid-line (row `j` swaps with `h - 1 - j`).
    pub fn mirrored_y(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.height {
            let src = self.height - 1 - j;
            for i in 0..self.width {
                out.elevations[j * self.width + i] = self.elevations[src * self.width + i];
                out.forest[j * self.width + i] = self.forest[src * self.width + i];
            }
        }
        out
    }
}

/// Inputs to [`generate_terrain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    pub width_cells: usize,
    pub height_cells: usize,
    pub cell_size: f64,
    /// Initial displacement amplitude in meters; halves at every subdivision level.
    pub roughness: f64,
    pub forest_fraction: f64,
    pub base_elevation: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            width_cells: 65,
            height_cells: 65,
            cell_size: 100.0,
            roughness: 40.0,
            forest_fraction: 0.3,
            base_elevation: 0.0,
        }
    }
}

/// Diamond-square heightmap with an i.i.d. Bernoulli forest mask.
///
/// The heightmap is synthesised on the smallest `2^n + 1` square covering the
/// requested dimensions and cropped.
pub fn generate_terrain(seed: u64, params: &TerrainParams) -> Result<TerrainGrid> {
    let TerrainParams { width_cells: w, height_cells: h, cell_size, roughness, forest_fraction, base_elevation } =
        *params;
    if w < 2 || h < 2 {
        return arg(format!("terrain dims must be >= 2x2, got {w}x{h}"));
    }
    if !(0.0..=1.0).contains(&forest_fraction) {
        return arg(format!("forest_fraction must lie in [0, 1], got {forest_fraction}"));
    }
    if !(roughness >= 0.0 && roughness.is_finite()) {
        return arg(format!("roughness must be a finite nonnegative value, got {roughness}"));
    }
    if !base_elevation.is_finite() {
        return arg("base_elevation must be finite");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut size = 2usize;
    while size + 1 < w.max(h) {
        size *= 2;
    }
    let n = size + 1;
    let mut grid = vec![0.0f64; n * n];
    let mut amp = roughness;
    let jitter = |rng: &mut ChaCha8Rng, amp: f64| {
        if amp == 0.0 {
            0.0
        } else {
            amp * rng.gen_range(-1.0..=1.0)
        }
    };
    for &(i, j) in &[(0, 0), (size, 0), (0, size), (size, size)] {
        grid[j * n + i] = base_elevation + jitter(&mut rng, amp);
    }

    let mut step = size;
    while step > 1 {
        let half = step / 2;
        // diamond
        for j in (half..n).step_by(step) {
            for i in (half..n).step_by(step) {
                let avg = (grid[(j - half) * n + i - half]
                    + grid[(j - half) * n + i + half]
                    + grid[(j + half) * n + i - half]
                    + grid[(j + half) * n + i + half])
                    / 4.0;
                grid[j * n + i] = avg + jitter(&mut rng, amp);
            }
        }
        // square
        for j in (0..n).step_by(half) {
            let start = if (j / half) % 2 == 0 { half } else { 0 };
            for i in (start..n).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if j >= half {
                    sum += grid[(j - half) * n + i];
                    count += 1.0;
                }
                if j + half < n {
                    sum += grid[(j + half) * n + i];
                    count += 1.0;
                }
                if i >= half {
                    sum += grid[j * n + i - half];
                    count += 1.0;
                }
                if i + half < n {
                    sum += grid[j * n + i + half];
                    count += 1.0;
                }
                grid[j * n + i] = sum / count + jitter(&mut rng, amp);
            }
        }
        step = half;
        amp *= 0.5;
    }

    let mut elevations = Vec::with_capacity(w * h);
    for j in 0..h {
        elevations.extend_from_slice(&grid[j * n..j * n + w]);
    }
    let forest = (0..w * h).map(|_| rng.gen_bool(forest_fraction)).collect();
    TerrainGrid::new(w, h, cell_size, elevations, forest)
}

/// Parses the text grid format:
///
/// ```text
/// grid <width> <height> <cell_size>
/// <width reals>   x height
/// forest           (optional)
/// <width 0/1>     x height
/// ```
pub fn parse_heightmap(text: &str) -> Result<TerrainGrid> {
    let lines: Vec<&str> = text.lines().collect();
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let header = lines.first().map(|l| l.trim()).filter(|l| !l.is_empty());
    let header = header.ok_or_else(|| perr(1, "empty file, expected `grid <width> <height> <cell_size>`".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "grid" {
        return Err(perr(1, format!("malformed header `{header}`")));
    }
    let width: usize = parts[1].parse().map_err(|_| perr(1, format!("bad width `{}`", parts[1])))?;
    let height: usize = parts[2].parse().map_err(|_| perr(1, format!("bad height `{}`", parts[2])))?;
    let cell_size: f64 = parts[3].parse().map_err(|_| perr(1, format!("bad cell_size `{}`", parts[3])))?;

    let mut elevations = Vec::with_capacity(width * height);
    for row in 0..height {
        let lineno = row + 2;
        let line = lines
            .get(row + 1)
            .ok_or_else(|| perr(lineno, format!("missing elevation row {}", row + 1)))?;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != width {
            return Err(perr(
                lineno,
                format!("ragged row {}: expected {width} cells, found {}", row + 1, cells.len()),
            ));
        }
        for c in cells {
            let v: f64 = c.parse().map_err(|_| perr(lineno, format!("non-numeric cell `{c}`")))?;
            elevations.push(v);
        }
    }

    let mut forest = vec![false; width * height];
    let mut next = height + 1;
    while lines.get(next).is_some_and(|l| l.trim().is_empty()) {
        next += 1;
    }
    if let Some(line) = lines.get(next) {
        if line.trim() != "forest" {
            return Err(perr(next + 1, format!("unexpected trailing content `{}`", line.trim())));
        }
        for row in 0..height {
            let lineno = next + row + 2;
            let line = lines
                .get(next + row + 1)
                .ok_or_else(|| perr(lineno, format!("missing forest row {}", row + 1)))?;
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != width {
                return Err(perr(
                    lineno,
                    format!("ragged forest row {}: expected {width} cells, found {}", row + 1, cells.len()),
                ));
            }
            for (i, c) in cells.into_iter().enumerate() {
                forest[row * width + i] = match c {
                    "0" => false,
                    "1" => true,
                    other => return Err(perr(lineno, format!("forest cell must be 0 or 1, found `{other}`"))),
                };
            }
        }
    }

    TerrainGrid::new(width, height, cell_size, elevations, forest).map_err(|e| perr(1, e.to_string()))
}

pub fn load_heightmap(path: impl AsRef<Path>) -> Result<TerrainGrid> {
    parse_heightmap(&std::fs::read_to_string(path)?)
}

/// Serializes a grid in the format read by [`parse_heightmap`]. Values use the
/// shortest round-trip representation.
pub fn format_heightmap(terrain: &TerrainGrid) -> String {
    let mut out = format!("grid {} {} {}\n", terrain.width, terrain.height, terrain.cell_size);
    for row in terrain.elevations.chunks(terrain.width) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    if terrain.forest.iter().any(|&f| f) {
        out.push_str("forest\n");
        for row in terrain.forest.chunks(terrain.width) {
            let cells: Vec<&str> = row.iter().map(|&f| if f { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    out
}

/// Placement constraints for [`place_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementParams {
    pub n_users: usize,
    pub max_user_spread: f64,
    pub user_height: f64,
    pub bs_height: f64,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self { n_users: 15, max_user_spread: MAX_USER_SPREAD, user_height: USER_HEIGHT, bs_height: BS_HEIGHT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub terrain: TerrainGrid,
    pub bs: Position3D,
    pub users: Vec<Position3D>,
    pub uav_init: Position3D,
    pub bounds: Bounds,
    pub max_user_spread: f64,
    pub user_height: f64,
}

impl Scenario {
    /// Largest pairwise horizontal distance between users.
    pub fn user_spread(&self) -> f64 {
        let mut spread = 0.0f64;
        for (a, u) in self.users.iter().enumerate() {
            for v in &self.users[a + 1..] {
                spread = spread.max(u.horizontal_distance(v));
            }
        }
        spread
    }

    /// Checks every structural invariant of a placed scenario.
    pub fn validate(&self, bs_height: f64) -> Result<()> {
        self.bounds.validate()?;
        if let Some(v) = self.bounds.violation(&self.uav_init) {
            return Err(Error::Bounds(format!("uav_init: {v}")));
        }
        let tol = 1e-9;
        for (k, u) in self.users.iter().enumerate() {
            let ground = self.terrain.elevation_at(u.x, u.y)?;
            if (u.z - ground - self.user_height).abs() > tol {
                return arg(format!("user {k} is not at user height above terrain"));
            }
        }
        let ground = self.terrain.elevation_at(self.bs.x, self.bs.y)?;
        if (self.bs.z - ground - bs_height).abs() > tol {
            return arg("base station is not at mast height above terrain");
        }
        if self.user_spread() > self.max_user_spread + tol {
            return arg(format!("user spread {} exceeds {}", self.user_spread(), self.max_user_spread));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Places the base station, `n_users` ground users and the initial relay pose
/// uniformly at random inside `bounds`.
pub fn place_scenario(
    seed: u64,
    terrain: &TerrainGrid,
    bounds: Bounds,
    params: &PlacementParams,
) -> Result<Scenario> {
    if params.n_users == 0 {
        return arg("n_users must be >= 1");
    }
    bounds.validate()?;
    if !terrain.in_extent(bounds.x_min, bounds.y_min) || !terrain.in_extent(bounds.x_max, bounds.y_max) {
        return Err(Error::Bounds(format!(
            "bounds {bounds:?} exceed terrain extent [0, {}] x [0, {}]",
            terrain.extent_x(),
            terrain.extent_y()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<Position3D> = Vec::with_capacity(params.n_users);
    let mut tries = 0usize;
    while users.len() < params.n_users {
        if tries >= PLACEMENT_BUDGET {
            return Err(Error::Placement(format!(
                "could not place {} users within spread {} m after {PLACEMENT_BUDGET} tries",
                params.n_users, params.max_user_spread
            )));
        }
        tries += 1;
        let x = uniform(&mut rng, bounds.x_min, bounds.x_max);
        let y = uniform(&mut rng, bounds.y_min, bounds.y_max);
        let candidate = Position3D::new(x, y, 0.0);
        if users.iter().all(|u| u.horizontal_distance(&candidate) <= params.max_user_spread) {
            let z = terrain.elevation_at(x, y)? + params.user_height;
            users.push(Position3D::new(x, y, z));
        }
    }
    let bx = uniform(&mut rng, bounds.x_min, bounds.x_max);
    let by = uniform(&mut rng, bounds.y_min, bounds.y_max);
    let bs = Position3D::new(bx, by, terrain.elevation_at(bx, by)? + params.bs_height);
    let uav_init = Position3D::new(
        uniform(&mut rng, bounds.x_min, bounds.x_max),
        uniform(&mut rng, bounds.y_min, bounds.y_max),
        uniform(&mut rng, bounds.z_min, bounds.z_max),
    );
    Ok(Scenario {
        terrain: terrain.clone(),
        bs,
        users,
        uav_init,
        bounds,
        max_user_spread: params.max_user_spread,
        user_height: params.user_height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: usize, h: usize, roughness: f64, forest: f64) -> TerrainParams {
        TerrainParams {
            width_cells: w,
            height_cells: h,
            cell_size: 10.0,
            roughness,
            forest_fraction: forest,
            base_elevation: 25.0,
        }
    }

    #[test]
    fn zero_roughness_is_flat_at_base() {
        let t = generate_terrain(3, &params(33, 17, 0.0, 0.0)).unwrap();
        assert!(t.elevations().iter().all(|&e| e == 25.0));
    }

    #[test]
    fn terrain_is_deterministic() {
        let p = params(40, 21, 12.0, 0.4);
        assert_eq!(generate_terrain(11, &p).unwrap(), generate_terrain(11, &p).unwrap());
        assert_ne!(generate_terrain(11, &p).unwrap(), generate_terrain(12, &p).unwrap());
    }

    #[test]
    fn forest_count_within_binomial_band() {
        // n = 4225, p = 0.3: mean 1267.5, sigma = sqrt(n p (1-p)) = 29.79
        let t = generate_terrain(7, &params(65, 65, 30.0, 0.3)).unwrap();
        let count = t.forest_mask().iter().filter(|&&f| f).count() as f64;
        let n = 65.0 * 65.0;
        let sigma = (n * 0.3 * 0.7f64).sqrt();
        assert!((count - 0.3 * n).abs() <= 3.0 * sigma, "count {count}");
    }

    #[test]
    fn invalid_terrain_arguments() {
        assert!(generate_terrain(0, &params(1, 5, 1.0, 0.1)).is_err());
        assert!(generate_terrain(0, &params(5, 5, 1.0, 1.5)).is_err());
        assert!(generate_terrain(0, &params(5, 5, -1.0, 0.5)).is_err());
    }

    #[test]
    fn parses_small_grid() {
        let t = parse_heightmap("grid 2 2 5\n0 1\n2 3\n").unwrap();
        assert_eq!(t.rows(), vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        assert_eq!(t.cell_size(), 5.0);
        assert!(t.forest_mask().iter().all(|&f| !f));
    }

    #[test]
    fn parses_forest_section() {
        let t = parse_heightmap("grid 2 2 1\n0 1\n2 3\nforest\n1 0\n0 1\n").unwrap();
        assert_eq!(t.forest_mask(), &[true, false, false, true]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        match parse_heightmap("") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_heightmap("grid 3 2 1\n0 1 2\n3 4\n") {
            Err(Error::Parse { line: 3, msg }) => assert!(msg.contains("ragged row 2"), "{msg}"),
            other => panic!("expected ragged-row error, got {other:?}"),
        }
        match parse_heightmap("grid 2 2 1\n0 x\n2 3\n") {
            Err(Error::Parse { line: 2, msg }) => assert!(msg.contains("non-numeric")),
            other => panic!("{other:?}"),
        }
        assert!(parse_heightmap("grd 2 2 1\n0 1\n2 3\n").is_err());
    }

    #[test]
    fn heightmap_text_round_trip() {
        let t = generate_terrain(5, &params(9, 6, 7.5, 0.5)).unwrap();
        assert_eq!(parse_heightmap(&format_heightmap(&t)).unwrap(), t);
    }

    #[test]
    fn bilinear_queries() {
        let t = TerrainGrid::new(2, 2, 10.0, vec![10.0, 20.0, 10.0, 20.0], vec![false; 4]).unwrap();
        assert_eq!(t.elevation_at(0.0, 0.0).unwrap(), 10.0);
        assert_eq!(t.elevation_at(10.0, 10.0).unwrap(), 20.0);
        assert_eq!(t.elevation_at(5.0, 3.0).unwrap(), 15.0);
        assert!(matches!(t.elevation_at(-1.0, 0.0), Err(Error::Bounds(_))));
        assert!(t.elevation_at(10.0 + 1e-9, 0.0).is_err());
    }

    #[test]
    fn scenario_places_requested_users() {
        let t = generate_terrain(1, &params(33, 33, 10.0, 0.2)).unwrap();
        let b = Bounds::over_terrain(&t, 10.0, 300.0);
        let s = place_scenario(9, &t, b, &PlacementParams::default()).unwrap();
        assert_eq!(s.users.len(), 15);
        s.validate(BS_HEIGHT).unwrap();
        assert_eq!(s, place_scenario(9, &t, b, &PlacementParams::default()).unwrap());
    }

    #[test]
    fn degenerate_bounds_collapse_to_a_point() {
        let t = TerrainGrid::flat(5, 5, 10.0, 3.0).unwrap();
        let b = Bounds { x_min: 20.0, x_max: 20.0, y_min: 15.0, y_max: 15.0, z_min: 50.0, z_max: 50.0 };
        let s = place_scenario(4, &t, b, &PlacementParams { n_users: 4, ..Default::default() }).unwrap();
        assert!(s.users.iter().all(|u| u.x == 20.0 && u.y == 15.0 && u.z == 4.5));
        assert_eq!(s.user_spread(), 0.0);
        assert_eq!(s.uav_init, Position3D::new(20.0, 15.0, 50.0));
        assert_eq!((s.bs.x, s.bs.y, s.bs.z), (20.0, 15.0, 13.0));
    }

    #[test]
    fn impossible_spread_reports_placement_error() {
        let t = TerrainGrid::flat(11, 11, 100.0, 0.0).unwrap();
        let b = Bounds::over_terrain(&t, 10.0, 300.0);
        let p = PlacementParams { n_users: 30, max_user_spread: 1e-6, ..Default::default() };
        assert!(matches!(place_scenario(1, &t, b, &p), Err(Error::Placement(_))));
    }

    #[test]
    fn bounds_outside_terrain_rejected() {
        let t = TerrainGrid::flat(5, 5, 10.0, 0.0).unwrap();
        let mut b = Bounds::over_terrain(&t, 10.0, 300.0);
        b.x_max = 100.0;
        assert!(place_scenario(1, &t, b, &PlacementParams::default()).is_err());
    }
}
