//! The round loop: the policy draws an arm, every user generates a loss,
//! events queue up under their delays, and deliveries are handed to the
//! policy only after it has acted. Traces feed the regret metrics and the
//! bound checkers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{
    expected_loss, expected_loss_totals, realize_loss, DelaySchedule, EnvError, SegmentedLossSpec,
};
use crate::policy::{DeliveredEvent, Policy};
use crate::seeding::{derive_seed, stream};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least 2 traces to aggregate, got {0}")]
    TooFewTraces(usize),
    #[error("traces have unequal lengths")]
    UnequalLengths,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Seeds for the two independent random streams an episode consumes.
/// `loss_seed` also keys the delay schedule generation upstream, so two
/// policies given the same seeds face the identical environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSeeds {
    /// Keys the oblivious loss table.
    pub loss_seed: u64,
    /// Keys the policy's selection randomness.
    pub policy_seed: u64,
}

/// Bucketed pending feedback: an event created at round `s` with delay `d`
/// sits in exactly bucket `s + d`; buckets past the horizon are never
/// created, only counted into `omega`.
#[derive(Debug)]
pub struct FeedbackQueue {
    buckets: Vec<Vec<DeliveredEvent>>,
    horizon: u64,
    created: u64,
    delivered: u64,
    omega: u64,
}

impl FeedbackQueue {
    pub fn new(horizon: u64) -> Self {
        Self {
            buckets: vec![Vec::new(); horizon as usize + 1],
            horizon,
            created: 0,
            delivered: 0,
            omega: 0,
        }
    }

    /// Queues an event for delivery at `delivery_round`; events falling past
    /// the horizon are dropped into omega.
    pub fn push(&mut self, event: DeliveredEvent, delivery_round: u64) {
        self.created += 1;
        if delivery_round > self.horizon {
            self.omega += 1;
        } else {
            self.buckets[delivery_round as usize].push(event);
        }
    }

    /// Removes and returns the delivery set `Phi_t` for round `t`, in
    /// creation order.
    pub fn pop_round(&mut self, t: u64) -> Vec<DeliveredEvent> {
        let events = std::mem::take(&mut self.buckets[t as usize]);
        self.delivered += events.len() as u64;
        events
    }

    pub fn created(&self) -> u64 {
        self.created
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Events whose delivery round exceeds the horizon.
    pub fn omega(&self) -> u64 {
        self.omega
    }

    /// Events created but not yet delivered nor dropped.
    pub fn in_flight(&self) -> u64 {
        self.created - self.delivered - self.omega
    }
}

/// One row per round of a completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: u64,
    pub arm: usize,
    /// `|Phi_t|`.
    pub delivered_count: u32,
    /// Missing count `V_t = M t - sum |Phi_tau|`.
    pub v_t: u64,
    pub epoch: u32,
    pub eta: f64,
    /// Group loss of the chosen arm, summed over users; in `[0, M]`.
    pub round_loss: f64,
    pub cum_loss: f64,
    /// Sum of origin delays of the events delivered this round.
    pub delivered_delay_sum: u64,
}

/// Complete per-round record of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub num_users: usize,
    pub num_arms: usize,
    pub omega_count: u64,
    pub created: u64,
    pub delivered: u64,
    /// Total delay mass of delivered events.
    pub delivered_delay_sum: u64,
    pub loss_seed: u64,
}

impl RunTrace {
    pub fn horizon(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn final_cum_loss(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_loss)
    }
}

/// Per-round visibility into a running episode, for trajectory checkers.
/// All methods default to no-ops.
pub trait EpisodeObserver<P: Policy> {
    /// Called after the policy has drawn its arm but before it observes the
    /// round's deliveries.
    fn before_observe(&mut self, _round: u64, _policy: &P, _events: &[DeliveredEvent]) {}
    /// Called after the policy has processed the deliveries.
    fn after_observe(&mut self, _round: u64, _policy: &P) {}
}

/// The do-nothing observer.
pub struct NoopObserver;

impl<P: Policy> EpisodeObserver<P> for NoopObserver {}

/// Runs one episode of `spec.horizon()` rounds. Deterministic in the seeds:
/// identical inputs give a bit-identical trace.
pub fn run_episode<P: Policy>(
    policy: &mut P,
    spec: &SegmentedLossSpec,
    delays: &DelaySchedule,
    seeds: EpisodeSeeds,
) -> Result<RunTrace, SimError> {
    run_episode_observed(policy, spec, delays, seeds, &mut NoopObserver)
}

/// `run_episode` with a per-round observer hook.
pub fn run_episode_observed<P: Policy>(
    policy: &mut P,
    spec: &SegmentedLossSpec,
    delays: &DelaySchedule,
    seeds: EpisodeSeeds,
    observer: &mut impl EpisodeObserver<P>,
) -> Result<RunTrace, SimError> {
    if delays.num_users() != spec.num_users() {
        return Err(SimError::DimensionMismatch(format!(
            "delay schedule has {} users, environment has {}",
            delays.num_users(),
            spec.num_users()
        )));
    }
    if delays.horizon() != spec.horizon() {
        return Err(SimError::DimensionMismatch(format!(
            "delay schedule horizon {} != environment horizon {}",
            delays.horizon(),
            spec.horizon()
        )));
    }
    let horizon = spec.horizon();
    let num_users = spec.num_users();

    policy.reset();
    let mut policy_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(&[seeds.policy_seed, stream::POLICY]));
    let mut queue = FeedbackQueue::new(horizon);
    let mut rows = Vec::with_capacity(horizon as usize);
    let mut cum_loss = 0.0;
    let mut delivered_total = 0u64;
    let mut delivered_delay_total = 0u64;

    for t in 1..=horizon {
        // deliveries for round t are popped first but handed to the policy
        // only after it draws; with all delays >= 1 an action can never see
        // its own feedback in its own round
        let events = queue.pop_round(t);
        let choice = policy.select(t, &mut policy_rng);

        let mut round_loss = 0.0;
        for j in 0..num_users {
            let loss = realize_loss(spec, seeds.loss_seed, t, choice.arm, j)?;
            round_loss += loss;
            let delivery = t + delays.delay(t, j) as u64;
            queue.push(
                DeliveredEvent {
                    origin_round: t,
                    user: j,
                    arm: choice.arm,
                    loss,
                    origin_prob: choice.prob,
                },
                delivery,
            );
        }

        observer.before_observe(t, policy, &events);
        policy.observe(t, &events);
        observer.after_observe(t, policy);

        delivered_total += events.len() as u64;
        let delay_sum: u64 = events.iter().map(|e| t - e.origin_round).sum();
        delivered_delay_total += delay_sum;
        cum_loss += round_loss;
        let snap = policy.snapshot();
        rows.push(TraceRow {
            round: t,
            arm: choice.arm,
            delivered_count: events.len() as u32,
            v_t: num_users as u64 * t - delivered_total,
            epoch: snap.epoch,
            eta: snap.eta,
            round_loss,
            cum_loss,
            delivered_delay_sum: delay_sum,
        });
    }

    Ok(RunTrace {
        rows,
        num_users,
        num_arms: spec.num_arms(),
        omega_count: queue.omega(),
        created: queue.created(),
        delivered: queue.delivered(),
        delivered_delay_sum: delivered_delay_total,
        loss_seed: seeds.loss_seed,
    })
}

/// Realized and expected per-round group losses of every arm, shared across
/// policies that face the same environment realization.
#[derive(Debug, Clone)]
pub struct EnvTables {
    num_arms: usize,
    /// `realized[(t-1) * N + i]` = sum over users of `l_i^j(t)`.
    realized: Vec<f64>,
    /// `expected[(t-1) * N + i]` = `M * E[l_i(t)]`.
    expected: Vec<f64>,
    /// Fixed arm with minimal total expected loss.
    pub oracle_arm: usize,
}

impl EnvTables {
    /// Materializes the loss table; intended for desk-scale instances where
    /// `T * N * M` draws are affordable.
    pub fn build(spec: &SegmentedLossSpec, loss_seed: u64) -> Result<Self, SimError> {
        let horizon = spec.horizon() as usize;
        let n = spec.num_arms();
        let m = spec.num_users();
        let mut realized = vec![0.0; horizon * n];
        let mut expected = vec![0.0; horizon * n];
        for t in 1..=spec.horizon() {
            for i in 0..n {
                let mut group = 0.0;
                for j in 0..m {
                    group += realize_loss(spec, loss_seed, t, i, j)?;
                }
                let idx = (t - 1) as usize * n + i;
                realized[idx] = group;
                expected[idx] = m as f64 * expected_loss(spec, t, i)?;
            }
        }
        let totals = expected_loss_totals(spec);
        let oracle_arm = crate::policy::OraclePolicy::from_totals(&totals).arm();
        Ok(Self {
            num_arms: n,
            realized,
            expected,
            oracle_arm,
        })
    }

    pub fn realized_group_loss(&self, t: u64, arm: usize) -> f64 {
        self.realized[(t - 1) as usize * self.num_arms + arm]
    }

    pub fn expected_group_loss(&self, t: u64, arm: usize) -> f64 {
        self.expected[(t - 1) as usize * self.num_arms + arm]
    }
}

/// Final regret numbers for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    /// Player cumulative loss minus the best fixed arm's realized total.
    pub regret_hindsight: f64,
    /// Player cumulative loss minus the oracle arm's expected total.
    pub regret_expected: f64,
    /// The hindsight-best fixed arm (lowest index on ties).
    pub best_arm: usize,
    pub omega_count: u64,
    pub delivered_delay_sum: u64,
}

/// Per-round cumulative regret curves for the trace CSV.
#[derive(Debug, Clone)]
pub struct RegretCurves {
    pub hindsight: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Evaluates both regret references against the full loss table.
pub fn compute_regret(
    trace: &RunTrace,
    spec: &SegmentedLossSpec,
    tables: &EnvTables,
) -> (RegretReport, RegretCurves) {
    let n = spec.num_arms();
    let horizon = trace.horizon();
    let mut arm_prefix = vec![0.0f64; n];
    let mut expected_oracle_prefix = 0.0;
    let mut hindsight = Vec::with_capacity(horizon as usize);
    let mut expected = Vec::with_capacity(horizon as usize);
    for row in &trace.rows {
        let t = row.round;
        for (i, acc) in arm_prefix.iter_mut().enumerate() {
            *acc += tables.realized_group_loss(t, i);
        }
        expected_oracle_prefix += tables.expected_group_loss(t, tables.oracle_arm);
        let best_prefix = arm_prefix.iter().cloned().fold(f64::INFINITY, f64::min);
        hindsight.push(row.cum_loss - best_prefix);
        expected.push(row.cum_loss - expected_oracle_prefix);
    }
    let mut best_arm = 0;
    for i in 1..n {
        if arm_prefix[i] < arm_prefix[best_arm] {
            best_arm = i;
        }
    }
    let report = RegretReport {
        regret_hindsight: *hindsight.last().unwrap_or(&0.0),
        regret_expected: *expected.last().unwrap_or(&0.0),
        best_arm,
        omega_count: trace.omega_count,
        delivered_delay_sum: trace.delivered_delay_sum,
    };
    (
        report,
        RegretCurves {
            hindsight,
            expected,
        },
    )
}

/// Per-round mean and sample standard deviation (n-1 denominator) across
/// replications of one cumulative metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Aggregate {
    pub fn band_upper(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + 2.0 * s).collect()
    }

    pub fn band_lower(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m - 2.0 * s).collect()
    }
}

/// Aggregates per-round series from `>= 2` replications of equal length.
pub fn aggregate_replications(series: &[Vec<f64>]) -> Result<Aggregate, SimError> {
    if series.len() < 2 {
        return Err(SimError::TooFewTraces(series.len()));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(SimError::UnequalLengths);
    }
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
        let var = series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean[t] = m;
        std[t] = var.sqrt();
    }
    Ok(Aggregate { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DelayKind, SegmentedLossSpec};
    use crate::policy::{MudExp3, RandomPolicy};

    fn tiny_spec(n: usize, m: usize, t: u64) -> SegmentedLossSpec {
        let params = vec![(0..n).map(|i| (0.2 + 0.1 * i as f64, 0.15)).collect()];
        SegmentedLossSpec::from_params(n, m, t, params).unwrap()
    }

    #[test]
    fn queue_basic_bookkeeping() {
        // T=3, M=1, all d=1: round-1 event delivered at 2, round-3 event in omega
        let spec = tiny_spec(2, 1, 3);
        let delays = DelaySchedule::constant(1, 3, 1).unwrap();
        let mut policy = RandomPolicy::new(2);
        let trace = run_episode(
            &mut policy,
            &spec,
            &delays,
            EpisodeSeeds {
                loss_seed: 1,
                policy_seed: 2,
            },
        )
        .unwrap();
        assert_eq!(trace.rows[0].delivered_count, 0);
        assert_eq!(trace.rows[1].delivered_count, 1);
        assert_eq!(trace.rows[2].delivered_count, 1);
        assert_eq!(trace.omega_count, 1);
        assert_eq!(trace.created, 3);
        assert_eq!(trace.delivered, 2);
    }

    #[test]
    fn worst_case_delays_deliver_nothing() {
        // d_t^j = T - t + 1 for all (t, j): every event lands past T
        let t_max = 8u64;
        let m = 2usize;
        let table: Vec<u32> = (1..=t_max)
            .flat_map(|t| std::iter::repeat((t_max - t + 1) as u32).take(m))
            .collect();
        let delays = DelaySchedule::build(m, t_max, t_max as u32, DelayKind::Custom(table), 0).unwrap();
        let spec = tiny_spec(2, m, t_max);
        let mut policy = RandomPolicy::new(2);
        let trace = run_episode(
            &mut policy,
            &spec,
            &delays,
            EpisodeSeeds {
                loss_seed: 1,
                policy_seed: 2,
            },
        )
        .unwrap();
        assert_eq!(trace.delivered, 0);
        assert_eq!(trace.omega_count, (m as u64) * t_max);
    }

    #[test]
    fn traces_are_bit_identical_across_reruns() {
        let spec = tiny_spec(3, 2, 60);
        let delays = DelaySchedule::uniform(2, 60, 5, 9).unwrap();
        let seeds = EpisodeSeeds {
            loss_seed: 4,
            policy_seed: 5,
        };
        let mut p1 = MudExp3::new(3, 2, 0.01, 5);
        let mut p2 = MudExp3::new(3, 2, 0.01, 5);
        let a = run_episode(&mut p1, &spec, &delays, seeds).unwrap();
        let b = run_episode(&mut p2, &spec, &delays, seeds).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conservation_created_equals_delivered_plus_omega() {
        let spec = tiny_spec(3, 3, 40);
        let delays = DelaySchedule::uniform(3, 40, 20, 11).unwrap();
        let mut policy = RandomPolicy::new(3);
        let trace = run_episode(
            &mut policy,
            &spec,
            &delays,
            EpisodeSeeds {
                loss_seed: 1,
                policy_seed: 1,
            },
        )
        .unwrap();
        assert_eq!(trace.created, 3 * 40);
        assert_eq!(trace.delivered + trace.omega_count, trace.created);
    }

    #[test]
    fn dimension_mismatches_rejected() {
        let spec = tiny_spec(2, 2, 10);
        let delays = DelaySchedule::uniform(3, 10, 2, 0).unwrap();
        let mut policy = RandomPolicy::new(2);
        assert!(matches!(
            run_episode(
                &mut policy,
                &spec,
                &delays,
                EpisodeSeeds {
                    loss_seed: 0,
                    policy_seed: 0
                }
            ),
            Err(SimError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn regret_hand_enumeration() {
        // T=2, M=1, N=2; player picks arm2 then arm1; dyadic losses so the
        // arm totals tie exactly: arm1=(0.25,0.375), arm2=(0.5,0.125),
        // both 0.625; player 0.875, regret 0.25
        let spec = tiny_spec(2, 1, 2);
        let tables = EnvTables {
            num_arms: 2,
            realized: vec![0.25, 0.5, 0.375, 0.125],
            expected: vec![0.3, 0.3, 0.3, 0.3],
            oracle_arm: 0,
        };
        let trace = RunTrace {
            rows: vec![
                TraceRow {
                    round: 1,
                    arm: 1,
                    delivered_count: 0,
                    v_t: 1,
                    epoch: 0,
                    eta: 0.0,
                    round_loss: 0.5,
                    cum_loss: 0.5,
                    delivered_delay_sum: 0,
                },
                TraceRow {
                    round: 2,
                    arm: 0,
                    delivered_count: 1,
                    v_t: 1,
                    epoch: 0,
                    eta: 0.0,
                    round_loss: 0.375,
                    cum_loss: 0.875,
                    delivered_delay_sum: 1,
                },
            ],
            num_users: 1,
            num_arms: 2,
            omega_count: 1,
            created: 2,
            delivered: 1,
            delivered_delay_sum: 1,
            loss_seed: 0,
        };
        let (report, _) = compute_regret(&trace, &spec, &tables);
        assert!((report.regret_hindsight - 0.25).abs() < 1e-12);
        // exact tie at 0.625 between arms -> lowest index wins
        assert_eq!(report.best_arm, 0);
    }

    #[test]
    fn hindsight_regret_equals_min_over_fixed_arms() {
        let spec = tiny_spec(4, 2, 30);
        let delays = DelaySchedule::uniform(2, 30, 4, 3).unwrap();
        let seeds = EpisodeSeeds {
            loss_seed: 8,
            policy_seed: 9,
        };
        let mut policy = RandomPolicy::new(4);
        let trace = run_episode(&mut policy, &spec, &delays, seeds).unwrap();
        let tables = EnvTables::build(&spec, seeds.loss_seed).unwrap();
        let (report, _) = compute_regret(&trace, &spec, &tables);
        let min_total: f64 = (0..4)
            .map(|i| (1..=30).map(|t| tables.realized_group_loss(t, i)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((report.regret_hindsight - (trace.final_cum_loss() - min_total)).abs() < 1e-9);
    }

    #[test]
    fn aggregate_identical_traces_zero_std() {
        let s = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let agg = aggregate_replications(&s).unwrap();
        assert_eq!(agg.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(agg.std, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn aggregate_hand_computed_band() {
        // values 10 and 14: mean 12, std 2*sqrt(2), band [6.34, 17.66]
        let s = vec![vec![10.0], vec![14.0]];
        let agg = aggregate_replications(&s).unwrap();
        assert!((agg.mean[0] - 12.0).abs() < 1e-12);
        assert!((agg.std[0] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((agg.band_lower()[0] - (12.0 - 4.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((agg.band_upper()[0] - (12.0 + 4.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn aggregate_order_independent_and_rejects_few() {
        let a = vec![vec![1.0, 5.0], vec![3.0, 1.0], vec![2.0, 3.0]];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(aggregate_replications(&a).unwrap(), aggregate_replications(&b).unwrap());
        assert!(matches!(
            aggregate_replications(&a[..1].to_vec()),
            Err(SimError::TooFewTraces(1))
        ));
    }
}
