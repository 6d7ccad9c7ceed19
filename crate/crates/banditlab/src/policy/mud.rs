//! MUD-EXP3: exponential weights over importance-weighted estimates of
//! multi-user delayed losses, with the learning rate truncated so the
//! per-round growth of any arm probability stays below `1 + 1/delta`.

use rand_chacha::ChaCha8Rng;

use super::{sample_categorical, Choice, DeliveredEvent, Policy, PolicySnapshot};

/// Probability floor applied before normalization so the simplex stays
/// strictly positive even after extreme loss accumulation.
const PROB_FLOOR: f64 = 1e-300;

/// `min(eta, 1 / (M N e (delta + 1)))`.
pub fn truncate_learning_rate(eta: f64, num_users: usize, num_arms: usize, delta: u32) -> f64 {
    let cap = 1.0
        / (num_users as f64 * num_arms as f64 * std::f64::consts::E * (delta as f64 + 1.0));
    eta.min(cap)
}

/// The importance-weighted estimator: `loss / origin_prob` for the arm that
/// was actually played, zero for every other arm.
pub fn importance_weighted_estimate(event: &DeliveredEvent, arm: usize) -> f64 {
    assert!(event.origin_prob > 0.0, "origin_prob must be positive");
    if event.arm == arm {
        event.loss / event.origin_prob
    } else {
        0.0
    }
}

/// Softmax of `-eta * L` computed with exponent shifting. The shift makes
/// the largest exponent zero, so no term overflows and the result is
/// invariant under adding a constant to every cumulative loss.
pub fn softmax_from_cum_losses(cum_losses: &[f64], eta: f64) -> Vec<f64> {
    let max_exp = cum_losses
        .iter()
        .map(|&l| -eta * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = cum_losses
        .iter()
        .map(|&l| (-eta * l - max_exp).exp().max(PROB_FLOOR))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

#[derive(Debug, Clone)]
pub struct MudExp3 {
    num_arms: usize,
    num_users: usize,
    eta_input: f64,
    eta: f64,
    delta: u32,
    cum_est_loss: Vec<f64>,
    dist: Vec<f64>,
}

impl MudExp3 {
    /// `delta` is the delay upper-bound parameter (must be `>= d_max` for
    /// the probability-growth guarantee); `eta` is truncated on entry.
    pub fn new(num_arms: usize, num_users: usize, eta: f64, delta: u32) -> Self {
        assert!(num_arms >= 1 && num_users >= 1);
        assert!(eta > 0.0, "learning rate must be positive");
        let mut p = Self {
            num_arms,
            num_users,
            eta_input: eta,
            eta: truncate_learning_rate(eta, num_users, num_arms, delta),
            delta,
            cum_est_loss: vec![0.0; num_arms],
            dist: vec![1.0 / num_arms as f64; num_arms],
        };
        p.reset();
        p
    }

    /// Truncated learning rate actually in use.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    /// Current arm distribution `p(t)`.
    pub fn distribution(&self) -> &[f64] {
        &self.dist
    }

    pub fn cum_est_loss(&self) -> &[f64] {
        &self.cum_est_loss
    }

    /// Applies one round of deliveries to the cumulative estimated losses.
    /// Returns the per-arm estimated loss vector for this round.
    pub(crate) fn accumulate(cum: &mut [f64], events: &[DeliveredEvent]) -> Vec<f64> {
        let mut round_est = vec![0.0; cum.len()];
        for e in events {
            let est = importance_weighted_estimate(e, e.arm);
            round_est[e.arm] += est;
            cum[e.arm] += est;
        }
        round_est
    }
}

impl Policy for MudExp3 {
    fn name(&self) -> &'static str {
        "mud"
    }

    fn reset(&mut self) {
        self.eta = truncate_learning_rate(self.eta_input, self.num_users, self.num_arms, self.delta);
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

    fn observe(&mut self, _round: u64, events: &[DeliveredEvent]) {
        Self::accumulate(&mut self.cum_est_loss, events);
        self.dist = softmax_from_cum_losses(&self.cum_est_loss, self.eta);
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            epoch: 0,
            eta: self.eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(arm: usize, loss: f64, prob: f64) -> DeliveredEvent {
        DeliveredEvent {
            origin_round: 1,
            user: 0,
            arm,
            loss,
            origin_prob: prob,
        }
    }

    #[test]
    fn truncation_reference_value() {
        // 1 / (2 * 3 * e * 5) = 1 / (30 e)
        let eta = truncate_learning_rate(0.1, 2, 3, 4);
        let expect = 1.0 / (30.0 * std::f64::consts::E);
        assert!((eta - expect).abs() < 1e-15);
        assert!((eta - 0.0122626).abs() < 1e-6);
    }

    #[test]
    fn truncation_passes_small_eta_through() {
        assert_eq!(truncate_learning_rate(1e-9, 10, 10, 10), 1e-9);
    }

    #[test]
    fn truncation_boundary_fixed_point() {
        let cap = 1.0 / (10.0 * 10.0 * std::f64::consts::E * 11.0);
        assert_eq!(truncate_learning_rate(cap, 10, 10, 10), cap);
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(importance_weighted_estimate(&event(2, 0.5, 0.25), 2), 2.0);
        assert_eq!(importance_weighted_estimate(&event(2, 0.5, 0.25), 1), 0.0);
        assert_eq!(importance_weighted_estimate(&event(1, 1.0, 1.0), 1), 1.0);
    }

    #[test]
    fn observe_empty_delivery_leaves_losses_unchanged() {
        let mut p = MudExp3::new(3, 2, 0.01, 5);
        p.observe(1, &[]);
        assert_eq!(p.cum_est_loss(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn observe_hand_summed_updates() {
        // two deliveries on arm 3 (index 2): 0.2/0.5 + 0.4/0.5 = 1.2
        let mut p = MudExp3::new(4, 2, 0.01, 5);
        p.observe(1, &[event(2, 0.2, 0.5), event(2, 0.4, 0.5)]);
        assert!((p.cum_est_loss()[2] - 1.2).abs() < 1e-15);
        assert_eq!(p.cum_est_loss()[0], 0.0);
        assert_eq!(p.cum_est_loss()[1], 0.0);
        assert_eq!(p.cum_est_loss()[3], 0.0);
    }

    #[test]
    fn observe_zero_losses_leave_estimates_unchanged() {
        let mut p = MudExp3::new(3, 5, 0.01, 5);
        let events: Vec<_> = (0..5).map(|_| event(1, 0.0, 0.3)).collect();
        p.observe(1, &events);
        assert_eq!(p.cum_est_loss(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_uniform_at_zero_losses() {
        let p = softmax_from_cum_losses(&[0.0, 0.0, 0.0], 0.5);
        for &x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_arm_reference() {
        // L = (0, 100), eta = 0.01: p = (1, e^-1) normalized
        let p = softmax_from_cum_losses(&[0.0, 100.0], 0.01);
        let e1 = (-1.0f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e1)).abs() < 1e-12);
        assert!((p[1] - e1 / (1.0 + e1)).abs() < 1e-12);
        assert!((p[0] - 0.731059).abs() < 1e-6);
        assert!((p[1] - 0.268941).abs() < 1e-6);
    }

    #[test]
    fn softmax_survives_huge_losses() {
        let p = softmax_from_cum_losses(&[0.0, 1e6, 2e9], 1.0);
        assert!(p.iter().all(|&x| x > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(
            losses in proptest::collection::vec(0.0..1e4f64, 2..8),
            shift in -1e3..1e3f64,
            eta in 1e-6..1e-1f64,
        ) {
            let a = softmax_from_cum_losses(&losses, eta);
            let shifted: Vec<f64> = losses.iter().map(|l| l + shift).collect();
            let b = softmax_from_cum_losses(&shifted, eta);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_is_simplex(
            losses in proptest::collection::vec(0.0..1e6f64, 2..10),
            eta in 1e-6..1.0f64,
        ) {
            let p = softmax_from_cum_losses(&losses, eta);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }
    }
}
