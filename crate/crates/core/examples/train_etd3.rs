//! Trains one E-TD3 agent on the desk preset and prints its learning curve.
//!
//! cargo run --release --example train_etd3 -- [episodes]

use std::sync::Arc;

use uavlab::harness::{build_agent, build_scenario, fit_scenario_pca, ExperimentConfig};
use uavlab::rl::{train_agent, AgentKind};

fn main() -> uavlab::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.json"))?;
    let scenario = Arc::new(build_scenario(&cfg, 1)?);
    let pca = Arc::new(fit_scenario_pca(&cfg, &scenario, 1)?);
    println!("PCA keeps {} of {} components", pca.k, pca.eigenvalues.len());
    let (env, mut agent) = build_agent(&cfg, AgentKind::Etd3, scenario, Some(pca), 1)?;
    let logs = train_agent(&env, &mut agent, episodes, 0)?;
    println!("episode  reward   r1     r2      r3     critic loss");
    for l in logs.iter().step_by(5) {
        let c = l.critic1_loss.map_or("-".into(), |v| format!("{v:.5}"));
        println!("{:7}  {:.4}  {:.3}  {:+.4}  {:.3}  {c}", l.episode, l.mean_step_reward, l.r1_mean, l.r2_mean, l.r3_mean);
    }
    println!("critic updates {}, actor updates {}", agent.critic_updates(), agent.actor_updates());
    Ok(())
}
