use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelParams;
use crate::coverage::{compute_coverage_map, map_mae, CoverageMap};
use crate::error::{arg, Result};
use crate::pca;
use crate::world::{Position3D, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityRow {
    pub target: f64,
    pub k: usize,
    pub fraction_components: f64,
    pub mean_mae_db: f64,
    pub per_map_mae_db: Vec<f64>,
}

/// Coverage maps at `n` relay poses drawn uniformly in the scenario bounds.
pub fn sample_maps(scenario: &Scenario, channel: &ChannelParams, n: usize, seed: u64) -> Result<Vec<CoverageMap>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = scenario.bounds;
    let mut draw = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    (0..n)
        .map(|_| {
            let pose = Position3D::new(draw(b.x_min, b.x_max), draw(b.y_min, b.y_max), draw(b.z_min, b.z_max));
            compute_coverage_map(scenario, &pose, channel)
        })
        .collect()
}

/// Fits one basis to a batch of `batch` maps and, for each variance target,
/// reports the retained fraction and the per-map reconstruction MAE.
pub fn pca_fidelity_report(
    scenario: &Scenario,
    channel: &ChannelParams,
    targets: &[f64],
    batch: usize,
    seed: u64,
) -> Result<Vec<FidelityRow>> {
    if targets.is_empty() {
        return arg("at least one variance target is required");
    }
    let maps = sample_maps(scenario, channel, batch, seed)?;
    let base = pca::fit(&maps, 1.0)?;
    targets
        .iter()
        .map(|&target| {
            let model = base.with_target(target)?;
            let per_map = maps
                .iter()
                .map(|m| map_mae(m, &model.reconstruct(&model.project(m)?)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(FidelityRow {
                target,
                k: model.k,
                fraction_components: model.feature_fraction(),
                mean_mae_db: per_map.iter().sum::<f64>() / per_map.len() as f64,
                per_map_mae_db: per_map,
            })
        })
        .collect()
}

/// Writes `pca_fidelity.csv` (one row per target) and `pca_fidelity_maps.csv`
/// (one row per target and map).
pub fn write_fidelity(rows: &[FidelityRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut summary = String::from("target,k,fraction_components,mean_mae_db\n");
    let mut maps = String::from("target,map,mae_db\n");
    for r in rows {
        writeln!(summary, "{},{},{},{}", r.target, r.k, r.fraction_components, r.mean_mae_db).unwrap();
        for (i, m) in r.per_map_mae_db.iter().enumerate() {
            writeln!(maps, "{},{i},{m}", r.target).unwrap();
        }
    }
    std::fs::write(dir.join("pca_fidelity.csv"), summary)?;
    std::fs::write(dir.join("pca_fidelity_maps.csv"), maps)?;
    Ok(())
}
