//! Retained components and reconstruction error per variance target.
//!
//! cargo run --release --example pca_fidelity

use uavlab::channel::ChannelParams;
use uavlab::harness::{build_scenario, pca_fidelity_report, ExperimentConfig};

fn main() -> uavlab::Result<()> {
    let cfg = ExperimentConfig::default();
    let scenario = build_scenario(&cfg, 1)?;
    let rows = pca_fidelity_report(&scenario, &ChannelParams::default(), &[0.9, 0.96, 0.98, 0.995, 1.0], 100, 1)?;
    println!("target      k  fraction  mean MAE dB  worst MAE dB");
    for r in rows {
        let worst = r.per_map_mae_db.iter().cloned().fold(0.0, f64::max);
        println!("{:6.3}  {:5}  {:8.3}  {:11.3}  {:12.3}", r.target, r.k, r.fraction_components, r.mean_mae_db, worst);
    }
    Ok(())
}
