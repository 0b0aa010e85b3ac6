//! Generates a seeded terrain, places a scenario on it and prints a summary.
//!
//! cargo run --release --example terrain -- [seed]

use uavlab::world::{format_heightmap, generate_terrain, place_scenario, Bounds, PlacementParams, TerrainParams};

fn main() -> uavlab::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let terrain = generate_terrain(seed, &TerrainParams::default())?;
    let e = terrain.elevations();
    let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let forest = terrain.forest_mask().iter().filter(|f| **f).count();
    println!(
        "terrain {}x{} cells of {} m, elevation {lo:.1}..{hi:.1} m, {forest} forested nodes",
        terrain.width(),
        terrain.height(),
        terrain.cell_size()
    );

    let bounds = Bounds::over_terrain(&terrain, 10.0, 300.0);
    let scenario = place_scenario(seed, &terrain, bounds, &PlacementParams::default())?;
    println!("base station {:?}", scenario.bs);
    println!("relay start  {:?}", scenario.uav_init);
    println!("{} users, spread {:.0} m", scenario.users.len(), scenario.user_spread());

    let text = format_heightmap(&terrain);
    println!("heightmap text: {} bytes, first line `{}`", text.len(), text.lines().next().unwrap_or(""));
    Ok(())
}
