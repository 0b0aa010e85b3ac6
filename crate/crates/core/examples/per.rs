//! Prioritized replay: empirical sampling frequencies against p^alpha / sum p^alpha.
//!
//! cargo run --release --example per

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavlab::replay::{PerConfig, PrioritizedBuffer, Transition};
use uavlab::rl::Observation;

fn main() -> uavlab::Result<()> {
    let config = PerConfig::default();
    let mut buffer = PrioritizedBuffer::new(8, config)?;
    let obs = Observation { image: vec![0.0], aux: vec![] };
    for k in 0..8 {
        buffer.push(Transition { state: obs.clone(), action: [0.0; 3], reward: k as f64, next_state: obs.clone(), done: false });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let first = buffer.sample(8, 1.0, &mut rng)?;
    let td: Vec<f64> = (0..8).map(|i| 0.25 * (i + 1) as f64).collect();
    buffer.update_priorities(&first.indices, &td)?;

    let draws = 200_000;
    let mut counts = [0usize; 8];
    for _ in 0..draws / 8 {
        for i in buffer.sample(8, 0.4, &mut rng)?.indices {
            counts[i.slot] += 1;
        }
    }
    let total = buffer.tree().total();
    println!("slot  priority  expected  observed");
    for (slot, c) in counts.iter().enumerate() {
        let expected = buffer.tree().get(slot) / total;
        println!("{slot:4}  {:8.4}  {expected:8.4}  {:8.4}", buffer.priority(slot), *c as f64 / draws as f64);
    }
    Ok(())
}
