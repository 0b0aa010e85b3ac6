//! Principal component analysis of coverage-map batches.
//!
//! Maps are flattened row-major, centered on the batch mean and decomposed
//! through the sample covariance `Xcᵀ Xc / (n - 1)`. When the map has more
//! cells than the batch has maps, the same non-zero spectrum is obtained from
//! the `n x n` Gram matrix `Xc Xcᵀ / (n - 1)` and the eigenvectors are lifted
//! back with `v = Xcᵀ u / sqrt((n - 1) ψ)`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageMap;
use crate::error::{arg, Error, Result};
use crate::world::Position3D;

/// Eigenvalues below this fraction of the largest one are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_dim: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub n_samples: usize,
    pub mean: Vec<f64>,
    /// Orthonormal eigenvectors, sorted by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub variance_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaScores {
    pub scores: Vec<f64>,
    /// Pose of the map the scores were taken from, carried into reconstructions.
    pub pose: Option<Position3D>,
}

/// Cyclic Jacobi eigensolver for a dense symmetric `n x n` matrix (row-major).
///
/// Returns eigenvalues (unsorted) and eigenvectors as columns of the returned
/// row-major matrix.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("{} entries for a {n}x{n} matrix", a.len())));
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 || n < 2 {
        return Ok(((0..n).map(|i| a[i * n + i]).collect(), v));
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[i * n + i]).collect(), v))
}

fn flatten(maps: &[CoverageMap]) -> Result<Vec<Vec<f64>>> {
    let first = &maps[0];
    maps.iter()
        .enumerate()
        .map(|(k, m)| {
            if !m.same_shape(first) {
                return arg(format!("map {k} is {}x{}, expected {}x{}", m.width, m.height, first.width, first.height));
            }
            if m.values.iter().any(|v| !v.is_finite()) {
                return arg(format!("map {k} has a non-finite cell"));
            }
            Ok(m.values.clone())
        })
        .collect()
}

fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn retained_for(eigenvalues: &[f64], target: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, ev) in eigenvalues.iter().enumerate() {
        acc += ev;
        if acc / total >= target {
            return i + 1;
        }
    }
    eigenvalues.len()
}

/// Fits a PCA basis to `maps` and retains enough components to explain
/// `variance_target` of the batch variance.
pub fn fit(maps: &[CoverageMap], variance_target: f64) -> Result<PcaModel> {
    if maps.len() < 2 {
        return arg(format!("PCA needs at least 2 maps, got {}", maps.len()));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return arg(format!("variance_target must lie in (0, 1], got {variance_target}"));
    }
    let rows = flatten(maps)?;
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> =
        rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let denom = (n - 1) as f64;

    let mut pairs: Vec<(f64, Vec<f64>)> = if d <= n {
        let mut cov = vec![0.0; d * d];
        for r in &centered {
            for a in 0..d {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                let row = &mut cov[a * d..(a + 1) * d];
                for (b, rb) in r.iter().enumerate().skip(a) {
                    row[b] += ra * rb;
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / denom;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        let (vals, vecs) = symmetric_eigen(cov, d)?;
        vals.into_iter()
            .enumerate()
            .map(|(c, ev)| (ev, (0..d).map(|r| vecs[r * d + c]).collect()))
            .collect()
    } else {
        let mut gram = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
                gram[a * n + b] = dot / denom;
                gram[b * n + a] = dot / denom;
            }
        }
        let (vals, vecs) = symmetric_eigen(gram, n)?;
        let top = vals.iter().cloned().fold(0.0, f64::max);
        vals.into_iter()
            .enumerate()
            .filter(|(_, ev)| *ev > RANK_TOLERANCE * top)
            .map(|(c, ev)| {
                let mut v = vec![0.0; d];
                for (r, row) in centered.iter().enumerate() {
                    let u = vecs[r * n + c];
                    for (vi, x) in v.iter_mut().zip(row) {
                        *vi += u * x;
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                (ev, v)
            })
            .collect()
    };

    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = pairs.first().map_or(0.0, |p| p.0.max(0.0));
    pairs.retain(|(ev, _)| *ev > RANK_TOLERANCE * top && *ev > 0.0);
    let (eigenvalues, mut components): (Vec<f64>, Vec<Vec<f64>>) = pairs.into_iter().unzip();
    components.iter_mut().for_each(|v| normalize_sign(v));
    let k = retained_for(&eigenvalues, variance_target);
    Ok(PcaModel {
        input_dim: d,
        width: maps[0].width,
        height: maps[0].height,
        cell_size: maps[0].cell_size,
        n_samples: n,
        mean,
        components,
        eigenvalues,
        k,
        variance_target,
    })
}

impl PcaModel {
    /// Same basis with `k` re-chosen for another variance target.
    pub fn with_target(&self, variance_target: f64) -> Result<PcaModel> {
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return arg(format!("variance_target must lie in (0, 1], got {variance_target}"));
        }
        let mut out = self.clone();
        out.variance_target = variance_target;
        out.k = retained_for(&self.eigenvalues, variance_target);
        Ok(out)
    }

    /// Same basis truncated to exactly `k` components.
    pub fn with_k(&self, k: usize) -> Result<PcaModel> {
        if k > self.components.len() {
            return arg(format!("k={k} exceeds the {} available components", self.components.len()));
        }
        let mut out = self.clone();
        out.k = k;
        Ok(out)
    }

    /// Retained components as a fraction of the most the batch could support,
    /// `min(input_dim, n_samples - 1)`.
    pub fn feature_fraction(&self) -> f64 {
        self.k as f64 / self.input_dim.min(self.n_samples - 1) as f64
    }

    pub fn explained_variance_curve(&self) -> Vec<(usize, f64)> {
        let total: f64 = self.eigenvalues.iter().sum();
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, ev)| {
                acc += ev;
                (i + 1, acc / total)
            })
            .collect()
    }

    pub fn project_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.input_dim {
            return Err(Error::Shape(format!("map has {} cells, model expects {}", values.len(), self.input_dim)));
        }
        Ok(self.components[..self.k]
            .iter()
            .map(|v| v.iter().zip(values).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    pub fn project(&self, map: &CoverageMap) -> Result<PcaScores> {
        if map.width != self.width || map.height != self.height {
            return Err(Error::Shape(format!(
                "map is {}x{}, model expects {}x{}",
                map.width, map.height, self.width, self.height
            )));
        }
        Ok(PcaScores { scores: self.project_values(&map.values)?, pose: Some(map.uav_pose) })
    }

    pub fn reconstruct_values(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.k {
            return Err(Error::Shape(format!("{} scores, model retains {}", scores.len(), self.k)));
        }
        let mut out = self.mean.clone();
        for (s, v) in scores.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(v) {
                *o += s * c;
            }
        }
        Ok(out)
    }

    pub fn reconstruct(&self, scores: &PcaScores) -> Result<CoverageMap> {
        let values = self.reconstruct_values(&scores.scores)?;
        let pose = scores.pose.unwrap_or(Position3D::new(0.0, 0.0, 0.0));
        CoverageMap::new(self.width, self.height, self.cell_size, values, pose)
    }

    /// Text dump: `pca <input_dim> <k> <variance_target>`, a shape line, the
    /// mean, the eigenvalues and one line per component. Floats use the
    /// shortest round-trip representation.
    pub fn to_text(&self) -> String {
        fn line(v: &[f64]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        }
        let mut out = format!("pca {} {} {}\n", self.input_dim, self.k, self.variance_target);
        let _ = writeln!(out, "shape {} {} {} {}", self.width, self.height, self.cell_size, self.n_samples);
        let _ = writeln!(out, "{}", line(&self.mean));
        let _ = writeln!(out, "{}", line(&self.eigenvalues));
        for c in &self.components {
            let _ = writeln!(out, "{}", line(c));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let fields = |i: usize| -> Result<Vec<&str>> {
            lines
                .get(i)
                .map(|l| l.split_whitespace().collect())
                .ok_or_else(|| perr(i + 1, "unexpected end of file".into()))
        };
        let floats = |i: usize| -> Result<Vec<f64>> {
            fields(i)?.iter().map(|s| s.parse().map_err(|_| perr(i + 1, format!("bad number `{s}`")))).collect()
        };
        let header = fields(0)?;
        if header.len() != 4 || header[0] != "pca" {
            return Err(perr(1, "expected `pca <input_dim> <k> <variance_target>`".into()));
        }
        let parse_usize = |s: &str, line: usize| s.parse::<usize>().map_err(|_| perr(line, format!("bad integer `{s}`")));
        let input_dim = parse_usize(header[1], 1)?;
        let k = parse_usize(header[2], 1)?;
        let variance_target: f64 = header[3].parse().map_err(|_| perr(1, "bad variance target".into()))?;
        let shape = fields(1)?;
        if shape.len() != 5 || shape[0] != "shape" {
            return Err(perr(2, "expected `shape <width> <height> <cell_size> <n_samples>`".into()));
        }
        let width = parse_usize(shape[1], 2)?;
        let height = parse_usize(shape[2], 2)?;
        let cell_size: f64 = shape[3].parse().map_err(|_| perr(2, "bad cell size".into()))?;
        let n_samples = parse_usize(shape[4], 2)?;
        let mean = floats(2)?;
        let eigenvalues = if lines.get(3).is_some_and(|l| l.trim().is_empty()) { Vec::new() } else { floats(3)? };
        let components: Vec<Vec<f64>> = (0..eigenvalues.len()).map(|c| floats(4 + c)).collect::<Result<_>>()?;
        if mean.len() != input_dim || components.iter().any(|c| c.len() != input_dim) || k > components.len() {
            return Err(perr(1, "vector lengths disagree with header".into()));
        }
        Ok(Self { input_dim, width, height, cell_size, n_samples, mean, components, eigenvalues, k, variance_target })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(values: Vec<f64>, w: usize) -> CoverageMap {
        let h = values.len() / w;
        CoverageMap::new(w, h, 1.0, values, Position3D::new(0.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn jacobi_diagonalizes_small_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let (mut vals, _) = symmetric_eigen(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_batch_needs_one_component() {
        let base: Vec<f64> = (0..12).map(|i| -60.0 - i as f64).collect();
        let pattern: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let maps: Vec<CoverageMap> = [-2.0, 0.5, 1.0, 3.0, -0.7]
            .iter()
            .map(|a| map_from(base.iter().zip(&pattern).map(|(b, p)| b + a * p).collect(), 4))
            .collect();
        for target in [0.5, 0.9, 1.0] {
            let m = fit(&maps, target).unwrap();
            assert_eq!(m.k, 1);
        }
        let m = fit(&maps, 1.0).unwrap();
        assert_eq!(m.explained_variance_curve(), vec![(1, 1.0)]);
    }

    #[test]
    fn zero_scores_reconstruct_mean() {
        let maps: Vec<CoverageMap> =
            (0..4).map(|s| map_from((0..6).map(|i| ((i * s) % 4) as f64).collect(), 3)).collect();
        let m = fit(&maps, 0.9).unwrap();
        let mean_map = m.reconstruct(&PcaScores { scores: vec![0.0; m.k], pose: None }).unwrap();
        assert_eq!(mean_map.values, m.mean);
        assert!(m.project(&mean_map).unwrap().scores.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn fit_argument_errors() {
        let a = map_from(vec![1.0, 2.0], 2);
        assert!(fit(&[a.clone()], 0.9).is_err());
        assert!(fit(&[a.clone(), a.clone()], 0.0).is_err());
        assert!(fit(&[a.clone(), a.clone()], 1.1).is_err());
        let b = map_from(vec![1.0, 2.0], 1);
        assert!(fit(&[a.clone(), b], 0.9).is_err());
        let m = fit(&[a.clone(), map_from(vec![3.0, 1.0], 2)], 1.0).unwrap();
        assert!(m.project(&map_from(vec![1.0, 2.0, 3.0], 3)).is_err());
        assert!(m.reconstruct(&PcaScores { scores: vec![0.0; m.k + 1], pose: None }).is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let maps: Vec<CoverageMap> = (0..5)
            .map(|s| map_from((0..8).map(|i| (i as f64 * 0.37 + s as f64).sin() * 10.0 - 70.0).collect(), 4))
            .collect();
        let m = fit(&maps, 0.95).unwrap();
        assert_eq!(PcaModel::from_text(&m.to_text()).unwrap(), m);
    }
}
