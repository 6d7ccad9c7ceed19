//! Arm-selection policies behind a single interface: the exponential-weights
//! learners (`MudExp3`, `AmudExp3`) and the four baselines (delayed UCB,
//! successive elimination, oracle, random).

mod amud;
mod baselines;
mod mud;

pub use amud::AmudExp3;
pub use baselines::{Ducb, OraclePolicy, RandomPolicy, SuccessiveElim};
pub use mud::{
    importance_weighted_estimate, softmax_from_cum_losses, truncate_learning_rate, MudExp3,
};

use rand_chacha::ChaCha8Rng;

/// One user's loss observation arriving at the player, carrying everything
/// the importance-weighted estimator needs about its origin round.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveredEvent {
    /// Round `s` at which the action was taken.
    pub origin_round: u64,
    /// User index `j`.
    pub user: usize,
    /// The arm `A_s` played at the origin round (0-based).
    pub arm: usize,
    /// Realized loss in `[0, 1]`.
    pub loss: f64,
    /// Probability the policy assigned to `A_s` at round `s`, recorded at
    /// action time. Always positive.
    pub origin_prob: f64,
}

/// An arm choice together with the probability the policy assigned to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub arm: usize,
    pub prob: f64,
}

/// Per-round diagnostic state exposed for traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySnapshot {
    /// Epoch index; always 0 for non-epoch policies.
    pub epoch: u32,
    /// Current learning rate; 0 for policies without one.
    pub eta: f64,
}

/// The policy contract. `select` at round `t` may depend only on events
/// delivered at rounds `<= t - 1` plus the policy's own randomness; the
/// simulator enforces the draw-then-observe ordering.
pub trait Policy {
    fn name(&self) -> &'static str;
    fn reset(&mut self);
    fn select(&mut self, round: u64, rng: &mut ChaCha8Rng) -> Choice;
    fn observe(&mut self, round: u64, events: &[DeliveredEvent]);
    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot { epoch: 0, eta: 0.0 }
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn reset(&mut self) {
        (**self).reset()
    }

    fn select(&mut self, round: u64, rng: &mut ChaCha8Rng) -> Choice {
        (**self).select(round, rng)
    }

    fn observe(&mut self, round: u64, events: &[DeliveredEvent]) {
        (**self).observe(round, events)
    }

    fn snapshot(&self) -> PolicySnapshot {
        (**self).snapshot()
    }
}

/// Samples an index from a probability vector via inverse CDF.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// The learning rate tuned to the known horizon and delivered-delay sum:
/// `sqrt(ln N / (M (T M N e + 4 sum_delays)))`.
pub fn recommended_eta(num_arms: usize, num_users: usize, horizon: u64, sum_delays: u64) -> f64 {
    let n = num_arms as f64;
    let m = num_users as f64;
    let t = horizon as f64;
    (n.ln() / (m * (t * m * n * std::f64::consts::E + 4.0 * sum_delays as f64))).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn categorical_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = vec![1.0 - 1e-12, 1e-12 / 2.0, 1e-12 / 2.0];
        for _ in 0..10_000 {
            assert_eq!(sample_categorical(&p, &mut rng), 0);
        }
    }

    #[test]
    fn categorical_uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = vec![0.1; 10];
        let n = 100_000;
        let mut counts = [0u64; 10];
        for _ in 0..n {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        for &c in &counts {
            assert!((c as f64 - n as f64 * 0.1).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn categorical_deterministic_under_fixed_seed() {
        let p = vec![0.25; 4];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample_categorical(&p, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn recommended_eta_reference_value() {
        // sqrt(ln 10 / (10 (1000*10*10*e + 4*50000)))
        let eta = recommended_eta(10, 10, 1000, 50_000);
        let expect = (10f64.ln()
            / (10.0 * (1000.0 * 10.0 * 10.0 * std::f64::consts::E + 200_000.0)))
            .sqrt();
        assert_eq!(eta, expect);
        assert!((eta - 6.99e-4).abs() < 1e-5);
    }

    #[test]
    fn recommended_eta_zero_delays_specialization() {
        let eta = recommended_eta(10, 10, 1000, 0);
        let expect =
            (10f64.ln() / (1000.0 * 100.0 * 10.0 * std::f64::consts::E)).sqrt();
        assert!((eta - expect).abs() < 1e-15);
    }

    #[test]
    fn recommended_eta_monotone_in_delays() {
        let a = recommended_eta(10, 10, 1000, 100);
        let b = recommended_eta(10, 10, 1000, 200);
        assert!(b < a);
    }
}
