//! Capped reservoir memories for regret and strategy training records.

use rand::Rng;

use crate::game::{InfoSetKey, JointAction};

/// Fixed-capacity reservoir: once full, each inserted record is retained
/// with equal probability.
#[derive(Debug, Clone)]
pub struct SampleMemory<T> {
    capacity: usize,
    seen: u64,
    records: Vec<T>,
}

impl<T> SampleMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        SampleMemory {
            capacity,
            seen: 0,
            records: Vec::new(),
        }
    }

    /// Reservoir insertion (Algorithm R).
    pub fn insert<R: Rng>(&mut self, record: T, rng: &mut R) {
        self.seen += 1;
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            let slot = rng.gen_range(0..self.seen);
            if (slot as usize) < self.capacity {
                self.records[slot as usize] = record;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of insertions, including records since evicted.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.seen = 0;
    }
}

/// Sampled instantaneous regrets at one infoset visit.
#[derive(Debug, Clone)]
pub struct RegretRecord {
    pub key: InfoSetKey,
    pub t: u64,
    pub entries: RegretEntries,
}

/// Action-indexed regrets: a dense vector for flat action sets, or the
/// evaluated joint-action candidates for the team.
#[derive(Debug, Clone)]
pub enum RegretEntries {
    Flat(Vec<f64>),
    Joint(Vec<(JointAction, f64)>),
}

/// Visited strategy of the non-updating player at one infoset.
#[derive(Debug, Clone)]
pub struct StrategyRecord {
    pub key: InfoSetKey,
    pub t: u64,
    pub strategy: RecordedStrategy,
}

#[derive(Debug, Clone)]
pub enum RecordedStrategy {
    /// Adversary distribution over its flat action set.
    Flat(Vec<f64>),
    /// Factored team strategy: one distribution per agent.
    TeamPerAgent(Vec<Vec<f64>>),
    /// Dense joint-space team strategy, row-major over `counts`.
    TeamJoint { probs: Vec<f64>, counts: Vec<usize> },
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stays_within_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut memory = SampleMemory::new(10);
        for i in 0..1000u32 {
            memory.insert(i, &mut rng);
        }
        assert_eq!(memory.len(), 10);
        assert_eq!(memory.seen(), 1000);
    }

    #[test]
    fn below_capacity_keeps_everything_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut memory = SampleMemory::new(100);
        for i in 0..50u32 {
            memory.insert(i, &mut rng);
        }
        assert_eq!(memory.records(), &(0..50).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn retention_is_roughly_uniform() {
        // Coarse sanity check; the acceptance suite runs the chi-squared test.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 400usize;
        let inserts = 500u32;
        let cap = 50usize;
        let mut first_half = 0usize;
        for _ in 0..trials {
            let mut memory = SampleMemory::new(cap);
            for i in 0..inserts {
                memory.insert(i, &mut rng);
            }
            first_half += memory.records().iter().filter(|&&i| i < inserts / 2).count();
        }
        let frac = first_half as f64 / (trials * cap) as f64;
        assert!((frac - 0.5).abs() < 0.05, "first-half fraction {frac}");
    }
}
