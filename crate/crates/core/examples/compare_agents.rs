//! Small TD3 / TD3+PCA / E-TD3 campaign with episodes-to-threshold per agent.
//!
//! cargo run --release --example compare_agents -- [runs] [episodes]

use uavlab::harness::{run_campaign, write_campaign, ExperimentConfig};

fn main() -> uavlab::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json"))?;
    cfg.runs = args.next().flatten().unwrap_or(2);
    cfg.episodes = args.next().flatten().unwrap_or(40);
    cfg.parallel = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run_campaign(&cfg)?;
    for a in &result.agents {
        let ep = a.convergence.episode.map_or("none".into(), |e| e.to_string());
        println!(
            "{:7} threshold {:.4} reached at episode {ep}, final mean reward {:.4}",
            a.kind.name(),
            a.convergence.threshold,
            a.final_mean_reward
        );
    }
    let dir = std::env::temp_dir().join("uavlab-compare");
    write_campaign(&result, &cfg, &dir)?;
    println!("curves and report written to {}", dir.display());
    Ok(())
}
