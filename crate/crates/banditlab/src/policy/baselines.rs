//! Baseline policies: delayed UCB, successive elimination, the fixed-arm
//! oracle, and uniform random selection.
//!
//! The UCB-style baselines treat each delivered user-loss as one independent
//! sample toward its arm's statistics. Ties break toward the lowest arm
//! index everywhere.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Choice, DeliveredEvent, Policy};
use crate::env::{expected_loss_totals, SegmentedLossSpec};

/// UCB-style index for losses under delayed feedback: pick the arm
/// minimizing `mean_i + sqrt(2 ln t / n_i)` over delivered feedback,
/// forcing one pull of any arm that has no samples yet. The width is kept
/// on the same side as in the classic reward-maximizing index, so a
/// scarcely sampled arm looks unattractive and the baseline commits to its
/// early favorite: strong in stationary environments, slow to re-adapt and
/// high-variance after distribution shifts, which is the reference
/// behavior this baseline reproduces.
#[derive(Debug, Clone)]
pub struct Ducb {
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl Ducb {
    pub fn new(num_arms: usize) -> Self {
        Self {
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, arm: usize) -> f64 {
        if self.counts[arm] == 0 {
            0.0
        } else {
            self.sums[arm] / self.counts[arm] as f64
        }
    }

    /// The loss index `mean + width`; lower is more attractive.
    pub fn index(&self, arm: usize, round: u64) -> f64 {
        let n = self.counts[arm] as f64;
        self.mean(arm) + (2.0 * (round as f64).ln() / n).sqrt()
    }
}

impl Policy for Ducb {
    fn name(&self) -> &'static str {
        "ducb"
    }

    fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.sums.iter_mut().for_each(|s| *s = 0.0);
    }

    fn select(&mut self, round: u64, _rng: &mut ChaCha8Rng) -> Choice {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return Choice { arm, prob: 1.0 };
        }
        let mut best = 0;
        let mut best_index = self.index(0, round);
        for arm in 1..self.counts.len() {
            let idx = self.index(arm, round);
            if idx < best_index {
                best = arm;
                best_index = idx;
            }
        }
        Choice {
            arm: best,
            prob: 1.0,
        }
    }

    fn observe(&mut self, _round: u64, events: &[DeliveredEvent]) {
        for e in events {
            self.counts[e.arm] += 1;
            self.sums[e.arm] += e.loss;
        }
    }
}

/// Successive elimination over delivered feedback: active arms are played
/// round-robin; arm `i` is dropped once its lower confidence loss exceeds
/// the smallest upper confidence loss among active arms.
#[derive(Debug, Clone)]
pub struct SuccessiveElim {
    active: Vec<bool>,
    next: usize,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl SuccessiveElim {
    pub fn new(num_arms: usize) -> Self {
        Self {
            active: vec![true; num_arms],
            next: 0,
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
        }
    }

    pub fn active_arms(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    fn confidence(&self, arm: usize, round: u64) -> f64 {
        if self.counts[arm] == 0 {
            f64::INFINITY
        } else {
            (2.0 * (round as f64).ln() / self.counts[arm] as f64).sqrt()
        }
    }

    fn mean(&self, arm: usize) -> f64 {
        if self.counts[arm] == 0 {
            0.0
        } else {
            self.sums[arm] / self.counts[arm] as f64
        }
    }

    fn eliminate(&mut self, round: u64) {
        let min_ucb = (0..self.active.len())
            .filter(|&i| self.active[i])
            .map(|i| self.mean(i) + self.confidence(i, round))
            .fold(f64::INFINITY, f64::min);
        for i in 0..self.active.len() {
            if self.active[i] && self.mean(i) - self.confidence(i, round) > min_ucb {
                self.active[i] = false;
            }
        }
    }
}

impl Policy for SuccessiveElim {
    fn name(&self) -> &'static str {
        "se"
    }

    fn reset(&mut self) {
        self.active.iter_mut().for_each(|a| *a = true);
        self.next = 0;
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.sums.iter_mut().for_each(|s| *s = 0.0);
    }

    fn select(&mut self, _round: u64, _rng: &mut ChaCha8Rng) -> Choice {
        let n = self.active.len();
        for _ in 0..n {
            let arm = self.next;
            self.next = (self.next + 1) % n;
            if self.active[arm] {
                return Choice { arm, prob: 1.0 };
            }
        }
        unreachable!("the elimination rule cannot empty the active set");
    }

    fn observe(&mut self, round: u64, events: &[DeliveredEvent]) {
        for e in events {
            self.counts[e.arm] += 1;
            self.sums[e.arm] += e.loss;
        }
        if !events.is_empty() {
            self.eliminate(round);
        }
    }
}

/// Plays the fixed arm with minimal total expected loss over the horizon,
/// computed from the environment's analytic means (simulation privilege).
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    arm: usize,
}

impl OraclePolicy {
    pub fn new(spec: &SegmentedLossSpec) -> Self {
        Self {
            arm: oracle_arm(&expected_loss_totals(spec)),
        }
    }

    pub fn from_totals(expected_totals: &[f64]) -> Self {
        Self {
            arm: oracle_arm(expected_totals),
        }
    }

    pub fn arm(&self) -> usize {
        self.arm
    }
}

/// Argmin with lowest-index tie-breaking.
pub(crate) fn oracle_arm(expected_totals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in expected_totals.iter().enumerate().skip(1) {
        if v < expected_totals[best] {
            best = i;
        }
    }
    best
}

impl Policy for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn reset(&mut self) {}

    fn select(&mut self, _round: u64, _rng: &mut ChaCha8Rng) -> Choice {
        Choice {
            arm: self.arm,
            prob: 1.0,
        }
    }

    fn observe(&mut self, _round: u64, _events: &[DeliveredEvent]) {}
}

/// Uniform random arm each round.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    num_arms: usize,
}

impl RandomPolicy {
    pub fn new(num_arms: usize) -> Self {
        assert!(num_arms >= 1);
        Self { num_arms }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn reset(&mut self) {}

    fn select(&mut self, _round: u64, rng: &mut ChaCha8Rng) -> Choice {
        Choice {
            arm: rng.gen_range(0..self.num_arms),
            prob: 1.0 / self.num_arms as f64,
        }
    }

    fn observe(&mut self, _round: u64, _events: &[DeliveredEvent]) {}
}
