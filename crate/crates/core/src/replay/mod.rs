//! Transition storage: a uniform ring buffer and proportional prioritized
//! replay backed by a sum tree.

mod sum_tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use sum_tree::SumTree;

use crate::error::{arg, Error, Result};
use crate::rl::Observation;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    /// Relay displacement `(dx, dy, dz)` in meters.
    pub action: [f64; 3],
    pub reward: f64,
    pub next_state: Observation,
    pub done: bool,
}

/// Slot reference returned by sampling. The stamp identifies the write that
/// filled the slot so updates aimed at evicted transitions can be detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub slot: usize,
    pub stamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<SampleIndex>,
    /// Importance-sampling weights, normalized by the batch maximum.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eps: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self { alpha: 0.6, beta_start: 0.4, beta_end: 1.0, eps: 1e-3 }
    }
}

impl PerConfig {
    /// Linear anneal of the importance exponent over `progress` in `[0, 1]`.
    pub fn beta_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.beta_start + (self.beta_end - self.beta_start) * p
    }
}

#[derive(Debug, Clone)]
struct Ring {
    capacity: usize,
    items: Vec<Transition>,
    stamps: Vec<u64>,
    next: usize,
    writes: u64,
}

impl Ring {
    fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return arg("replay capacity must be positive");
        }
        Ok(Self { capacity, items: Vec::new(), stamps: Vec::new(), next: 0, writes: 0 })
    }

    fn push(&mut self, t: Transition) -> usize {
        let slot = self.next;
        self.writes += 1;
        if self.items.len() < self.capacity {
            self.items.push(t);
            self.stamps.push(self.writes);
        } else {
            self.items[slot] = t;
            self.stamps[slot] = self.writes;
        }
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    fn index(&self, slot: usize) -> SampleIndex {
        SampleIndex { slot, stamp: self.stamps[slot] }
    }

    /// Stored transitions from oldest to newest.
    fn ordered(&self) -> Vec<&Transition> {
        if self.items.len() < self.capacity {
            self.items.iter().collect()
        } else {
            self.items[self.next..].iter().chain(&self.items[..self.next]).collect()
        }
    }
}

/// Uniform-with-replacement replay.
#[derive(Debug, Clone)]
pub struct UniformBuffer {
    ring: Ring,
}

impl UniformBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        Ok(Self { ring: Ring::new(capacity)? })
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.ring.push(t);
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<SampledBatch> {
        if batch == 0 || self.len() < batch {
            return Err(Error::Usage(format!("cannot sample {batch} from a buffer of {}", self.len())));
        }
        let indices = (0..batch).map(|_| self.ring.index(rng.gen_range(0..self.len()))).collect();
        Ok(SampledBatch { indices, weights: vec![1.0; batch] })
    }
}

/// Proportional prioritized replay: slot `i` is drawn with probability
/// `p_i^α / Σ_j p_j^α`.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    ring: Ring,
    tree: SumTree,
    /// Raw priorities `p_i`; the tree stores `p_i^α`.
    priorities: Vec<f64>,
    raw_max: SumTree,
    config: PerConfig,
    stale_updates: usize,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, config: PerConfig) -> Result<Self> {
        if !(config.alpha >= 0.0) || !(config.eps > 0.0) {
            return arg(format!("PER needs alpha >= 0 and eps > 0, got {config:?}"));
        }
        Ok(Self {
            ring: Ring::new(capacity)?,
            tree: SumTree::new(capacity),
            priorities: vec![0.0; capacity],
            raw_max: SumTree::new(capacity),
            config,
            stale_updates: 0,
        })
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.items.is_empty()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.priorities[slot]
    }

    pub fn stale_updates(&self) -> usize {
        self.stale_updates
    }

    fn set_priority(&mut self, slot: usize, p: f64) {
        self.priorities[slot] = p;
        self.raw_max.set(slot, p);
        self.tree.set(slot, p.powf(self.config.alpha));
    }

    /// Stores `t` at the current maximum priority (1.0 for an empty buffer).
    pub fn push(&mut self, t: Transition) {
        let p = if self.is_empty() { 1.0 } else { self.raw_max.max() };
        let slot = self.ring.push(t);
        self.set_priority(slot, p);
    }

    /// Stratified proportional sampling with importance weights
    /// `(N P(i))^-β / max_batch`.
    pub fn sample<R: Rng>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        if batch == 0 || self.len() < batch {
            return Err(Error::Usage(format!("cannot sample {batch} from a buffer of {}", self.len())));
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for i in 0..batch {
            let u: f64 = rng.gen();
            let slot = self.tree.find((i as f64 + u) * segment).min(self.len() - 1);
            let prob = self.tree.get(slot) / total;
            indices.push(self.ring.index(slot));
            weights.push((n * prob).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        Ok(SampledBatch { indices, weights })
    }

    /// `p_i <- |td_i| + eps`. Indices whose slot was overwritten since sampling
    /// are skipped and counted.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Shape(format!("{} indices for {} td errors", indices.len(), td_errors.len())));
        }
        for (idx, td) in indices.iter().zip(td_errors) {
            if idx.slot >= self.len() {
                return arg(format!("slot {} out of range", idx.slot));
            }
            if self.ring.stamps[idx.slot] != idx.stamp {
                self.stale_updates += 1;
                continue;
            }
            if !td.is_finite() {
                return Err(Error::NonFinite("td error".into()));
            }
            self.set_priority(idx.slot, td.abs() + self.config.eps);
        }
        Ok(())
    }
}

/// Replay used by an agent: uniform for the baselines, prioritized for E-TD3.
#[derive(Debug, Clone)]
pub enum ReplayBuffer {
    Uniform(UniformBuffer),
    Prioritized(PrioritizedBuffer),
}

impl ReplayBuffer {
    pub fn len(&self) -> usize {
        match self {
            ReplayBuffer::Uniform(b) => b.len(),
            ReplayBuffer::Prioritized(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, t: Transition) {
        match self {
            ReplayBuffer::Uniform(b) => b.push(t),
            ReplayBuffer::Prioritized(b) => b.push(t),
        }
    }

    pub fn sample<R: Rng>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<SampledBatch> {
        match self {
            ReplayBuffer::Uniform(b) => b.sample(batch, rng),
            ReplayBuffer::Prioritized(b) => b.sample(batch, beta, rng),
        }
    }

    pub fn update_priorities(&mut self, indices: &[SampleIndex], td_errors: &[f64]) -> Result<()> {
        match self {
            ReplayBuffer::Uniform(_) => Ok(()),
            ReplayBuffer::Prioritized(b) => b.update_priorities(indices, td_errors),
        }
    }

    pub fn get(&self, idx: SampleIndex) -> &Transition {
        let ring = match self {
            ReplayBuffer::Uniform(b) => &b.ring,
            ReplayBuffer::Prioritized(b) => &b.ring,
        };
        &ring.items[idx.slot]
    }

    /// Stored transitions in insertion order, oldest first.
    pub fn ordered(&self) -> Vec<&Transition> {
        match self {
            ReplayBuffer::Uniform(b) => b.ring.ordered(),
            ReplayBuffer::Prioritized(b) => b.ring.ordered(),
        }
    }

    pub fn is_prioritized(&self) -> bool {
        matches!(self, ReplayBuffer::Prioritized(_))
    }
}
