//! Prioritized experience replay: a ring buffer over generic transition
//! payloads with a sum-tree for proportional sampling, priority exponent α,
//! and max-normalized importance-sampling weights.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("cannot sample from an empty replay buffer")]
    Empty,
}

/// Floor applied to raw priorities so no stored transition becomes
/// unsampleable.
const PRIORITY_FLOOR: f64 = 1e-6;

/// One sampled batch: buffer indices and their importance weights
/// (normalized so the largest weight in the batch is 1).
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay over payload type `T`.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay<T> {
    capacity: usize,
    alpha: f64,
    items: Vec<Option<T>>,
    /// Next ring position to write.
    next: usize,
    len: usize,
    /// Sum tree: `leaf_base + i` holds priority^α of slot i.
    tree: Vec<f64>,
    leaf_base: usize,
    /// Largest raw priority seen; assigned to fresh transitions.
    max_priority: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        let leaves = capacity.next_power_of_two();
        Self {
            capacity,
            alpha,
            items: std::iter::repeat_with(|| None).take(capacity).collect(),
            next: 0,
            len: 0,
            tree: vec![0.0; 2 * leaves],
            leaf_base: leaves,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &T {
        self.items[index].as_ref().expect("index from sample() is occupied")
    }

    /// Insert with the current maximum priority, evicting the oldest entry
    /// once full.
    pub fn push(&mut self, item: T) {
        let slot = self.next;
        self.items[slot] = Some(item);
        self.set_mass(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Re-prioritize a transition (e.g. with its latest loss). Raw priority
    /// is floored; the α exponent is applied internally.
    pub fn update_priority(&mut self, index: usize, priority: f64) {
        let p = priority.max(PRIORITY_FLOOR);
        if p > self.max_priority {
            self.max_priority = p;
        }
        self.set_mass(index, p.powf(self.alpha));
    }

    fn set_mass(&mut self, slot: usize, mass: f64) {
        let mut node = self.leaf_base + slot;
        let delta = mass - self.tree[node];
        while node > 0 {
            self.tree[node] += delta;
            node /= 2;
        }
    }

    fn total_mass(&self) -> f64 {
        self.tree[1]
    }

    fn mass_of(&self, slot: usize) -> f64 {
        self.tree[self.leaf_base + slot]
    }

    /// Walk the tree to the leaf containing cumulative mass `target`.
    fn find_leaf(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.leaf_base {
            let left = 2 * node;
            if target < self.tree[left] {
                node = left;
            } else {
                target -= self.tree[left];
                node = left + 1;
            }
        }
        (node - self.leaf_base).min(self.len - 1)
    }

    /// Stratified proportional sample of `batch` indices with
    /// importance-sampling exponent `beta`.
    pub fn sample<R: Rng>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampleBatch, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        let total = self.total_mass();
        let segment = total / batch as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        let n = self.len as f64;
        let mut w_max = 0.0f64;
        for k in 0..batch {
            let target = (k as f64 + rng.gen::<f64>()) * segment;
            let idx = self.find_leaf(target.min(total * (1.0 - 1e-15)));
            let prob = self.mass_of(idx) / total;
            let w = (n * prob).powf(-beta);
            w_max = w_max.max(w);
            indices.push(idx);
            weights.push(w);
        }
        for w in &mut weights {
            *w /= w_max;
        }
        Ok(SampleBatch { indices, weights })
    }
}
