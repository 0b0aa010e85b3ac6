//! Binary segment tree holding per-slot sums and maxima.

#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, sums: vec![0.0; 2 * leaves], maxes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    pub fn max(&self) -> f64 {
        self.maxes[1]
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.sums[self.leaves + slot]
    }

    /// Sets a leaf and recomputes every ancestor from its children.
    pub fn set(&mut self, slot: usize, value: f64) {
        let mut node = self.leaves + slot;
        self.sums[node] = value;
        self.maxes[node] = value;
        while node > 1 {
            node /= 2;
            let (l, r) = (2 * node, 2 * node + 1);
            self.sums[node] = self.sums[l] + self.sums[r];
            self.maxes[node] = self.maxes[l].max(self.maxes[r]);
        }
    }

    /// Leaf whose cumulative range contains `prefix`; never returns an empty leaf
    /// while the tree is non-empty.
    pub fn find(&self, prefix: f64) -> usize {
        let mut node = 1;
        let mut s = prefix;
        while node < self.leaves {
            let (l, r) = (2 * node, 2 * node + 1);
            if (s < self.sums[l] && self.sums[l] > 0.0) || self.sums[r] <= 0.0 {
                node = l;
            } else {
                s -= self.sums[l];
                node = r;
            }
        }
        node - self.leaves
    }
}
