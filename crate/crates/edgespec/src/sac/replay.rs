//! Fixed-capacity experience buffer with uniform sampling.

use rand::Rng;

/// One stored interaction step.
///
/// Observations are kept both as the deduplicated global feature vector
/// (critic input) and as the per-agent views (policy inputs), so updates
/// never have to re-derive one from the other.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Global state features at the decision time.
    pub global_obs: Vec<f64>,
    /// Per-agent observation vectors at the decision time.
    pub agent_obs: Vec<Vec<f64>>,
    /// Per-agent raw actions actually taken, each in `[0, 1]^(2M)`.
    pub actions: Vec<Vec<f64>>,
    /// Shared scalar reward.
    pub reward: f64,
    /// Global state features after the step.
    pub next_global_obs: Vec<f64>,
    /// Per-agent observation vectors after the step.
    pub next_agent_obs: Vec<Vec<f64>>,
    /// Whether the episode ended at this step (no bootstrapping past it).
    pub done: bool,
}

/// Ring buffer: once full, new pushes overwrite the oldest entries.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    /// Empty buffer holding at most `capacity` transitions.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, slots: Vec::with_capacity(capacity.min(4096)), head: 0 }
    }

    /// Number of transitions currently stored.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    /// Whether nothing has been stored yet.
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Store one transition, evicting the oldest if at capacity.
    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Draw `batch` transitions uniformly at random (with replacement).
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Transition> {
        assert!(!self.slots.is_empty(), "cannot sample from an empty buffer");
        (0..batch).map(|_| &self.slots[rng.random_range(0..self.slots.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn tagged(tag: f64) -> Transition {
        Transition {
            global_obs: vec![tag],
            agent_obs: vec![vec![tag]],
            actions: vec![vec![tag]],
            reward: tag,
            next_global_obs: vec![tag],
            next_agent_obs: vec![vec![tag]],
            done: false,
        }
    }

    #[test]
    fn never_exceeds_capacity_and_overwrites_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(tagged(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.slots.iter().map(|t| t.reward).collect();
        // 0 and 1 were evicted by 3 and 4.
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_with_a_fixed_seed_is_reproducible() {
        let mut buf = ReplayBuffer::new(16);
        for i in 0..16 {
            buf.push(tagged(i as f64));
        }
        let a: Vec<f64> =
            buf.sample(8, &mut substream(3, "replay", 0)).iter().map(|t| t.reward).collect();
        let b: Vec<f64> =
            buf.sample(8, &mut substream(3, "replay", 0)).iter().map(|t| t.reward).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform_within_three_sigma() {
        let n = 20;
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.push(tagged(i as f64));
        }
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        let mut rng = substream(4, "replay", 0);
        for t in buf.sample(draws, &mut rng) {
            counts[t.reward as usize] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let dev = (c as f64 - draws as f64 * p).abs();
            assert!(dev <= 3.0 * sigma, "index {i} drawn {c} times, {dev:.1} off (3 sigma = {:.1})", 3.0 * sigma);
        }
    }
}
