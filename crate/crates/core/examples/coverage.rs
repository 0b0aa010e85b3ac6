//! Coverage maps at a few relay altitudes over the same scenario.
//!
//! cargo run --release --example coverage

use uavlab::channel::{link_budget, ChannelParams, LinkKind};
use uavlab::coverage::compute_coverage_map;
use uavlab::world::{generate_terrain, place_scenario, Bounds, PlacementParams, Position3D, TerrainParams};

fn main() -> uavlab::Result<()> {
    let terrain = generate_terrain(7, &TerrainParams::default())?;
    let bounds = Bounds::over_terrain(&terrain, 10.0, 300.0);
    let scenario = place_scenario(7, &terrain, bounds, &PlacementParams::default())?;
    let params = ChannelParams::default();
    let c = bounds.center();

    println!("altitude  mean dBm  best dBm  worst dBm  bs link dBm");
    for z in [20.0, 60.0, 120.0, 240.0] {
        let pose = Position3D::new(c.x, c.y, z);
        let map = compute_coverage_map(&scenario, &pose, &params)?;
        let mean = map.values.iter().sum::<f64>() / map.values.len() as f64;
        let best = map.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let worst = map.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let bs = link_budget(LinkKind::BsToUav, &scenario.terrain, &scenario.bs, &pose, &params)?;
        println!("{z:8.0}  {mean:8.2}  {best:8.2}  {worst:9.2}  {:11.2}", bs.rx_power_dbm);
    }

    let user = scenario.users[0];
    let lb = link_budget(LinkKind::UavToUser, &scenario.terrain, &Position3D::new(c.x, c.y, 60.0), &user, &params)?;
    println!(
        "user 0: free space {:.2} dB, diffraction {:.2} dB, vegetation {:.2} dB, received {:.2} dBm",
        lb.pl_db, lb.ked_db, lb.veg_db, lb.rx_power_dbm
    );
    Ok(())
}
