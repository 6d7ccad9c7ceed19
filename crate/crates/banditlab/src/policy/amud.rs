//! AMUD-EXP3: the horizon-free variant. A doubling trick on the cumulative
//! missing-feedback count splits the timeline into epochs; each epoch resets
//! the cumulative estimated losses and shrinks the learning rate by 1/sqrt(2).

use rand_chacha::ChaCha8Rng;

use super::{sample_categorical, mud::softmax_from_cum_losses, Choice, DeliveredEvent, Policy, PolicySnapshot};
use super::mud::MudExp3;

#[derive(Debug, Clone)]
pub struct AmudExp3 {
    num_arms: usize,
    num_users: usize,
    epoch: u32,
    /// Running sum of `V_t` over all rounds so far.
    cum_missing: u64,
    /// Total events delivered so far.
    received: u64,
    /// `V_t` of the most recently observed round.
    last_missing: u64,
    eta: f64,
    cum_est_loss: Vec<f64>,
    dist: Vec<f64>,
}

impl AmudExp3 {
    pub fn new(num_arms: usize, num_users: usize) -> Self {
        assert!(num_arms >= 1 && num_users >= 1);
        let mut p = Self {
            num_arms,
            num_users,
            epoch: 0,
            cum_missing: 0,
            received: 0,
            last_missing: 0,
            eta: 0.0,
            cum_est_loss: vec![0.0; num_arms],
            dist: vec![1.0 / num_arms as f64; num_arms],
        };
        p.reset();
        p
    }

    /// `eta_eps = (1/M) sqrt(ln N / 2^eps)`.
    fn eta_for_epoch(&self, epoch: u32) -> f64 {
        ((self.num_arms as f64).ln() / 2f64.powi(epoch as i32)).sqrt() / self.num_users as f64
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `V_t` as computed at the last observed round.
    pub fn last_missing(&self) -> u64 {
        self.last_missing
    }

    pub fn cum_missing(&self) -> u64 {
        self.cum_missing
    }

    pub fn distribution(&self) -> &[f64] {
        &self.dist
    }
}

impl Policy for AmudExp3 {
    fn name(&self) -> &'static str {
        "amud"
    }

    fn reset(&mut self) {
        self.epoch = 0;
        self.cum_missing = 0;
        self.received = 0;
        self.last_missing = 0;
        self.eta = self.eta_for_epoch(0);
        self.cum_est_loss.iter_mut().for_each(|l| *l = 0.0);
        self.dist = vec![1.0 / self.num_arms as f64; self.num_arms];
    }

    fn select(&mut self, _round: u64, rng: &mut ChaCha8Rng) -> Choice {
        let arm = sample_categorical(&self.dist, rng);
        Choice {
            arm,
            prob: self.dist[arm],
        }
    }

    fn observe(&mut self, round: u64, events: &[DeliveredEvent]) {
        self.received += events.len() as u64;
        // V_t = M*t - total delivered through t
        let v = self.num_users as u64 * round - self.received;
        self.last_missing = v;
        self.cum_missing += v;
        // missing mass can jump past several thresholds in one round, so the
        // epoch advances in a loop; each advance resets the loss estimates
        while (self.cum_missing as u128) >= (self.num_users as u128) << self.epoch {
            self.epoch += 1;
            self.cum_est_loss.iter_mut().for_each(|l| *l = 0.0);
        }
        self.eta = self.eta_for_epoch(self.epoch);
        MudExp3::accumulate(&mut self.cum_est_loss, events);
        self.dist = softmax_from_cum_losses(&self.cum_est_loss, self.eta);
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            epoch: self.epoch,
            eta: self.eta,
        }
    }
}
