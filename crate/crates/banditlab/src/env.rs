//! The oblivious adversary: segmented truncated-Gaussian loss processes and
//! bounded delay schedules, realized deterministically from seeds.
//!
//! Every loss value is a pure function of `(spec, seed, round, arm, user)`,
//! so the full `T x N x M` loss table exists logically before play begins
//! without ever being materialized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::seeding::{derive_seed, stream, SplitMix64};

/// Generator bounds for per-(arm, segment) standard deviations.
pub const SIGMA_MIN: f64 = 0.1;
pub const SIGMA_MAX: f64 = 0.2;

const REJECTION_CAP: u32 = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("tran_num {tran_num} exceeds horizon {horizon}")]
    TooManySegments { tran_num: u64, horizon: u64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-(arm, segment) truncated-Gaussian parameters over a uniform partition
/// of the horizon into `tran_num` segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedLossSpec {
    num_arms: usize,
    num_users: usize,
    horizon: u64,
    /// First round of each segment; `segment_starts[0] == 1`.
    segment_starts: Vec<u64>,
    /// `params[segment][arm] = (mean, std)`.
    params: Vec<Vec<(f64, f64)>>,
}

impl SegmentedLossSpec {
    /// Builds a spec from explicit parameters. Means must lie in `[0, 1]`
    /// and standard deviations must be positive; the `[0.1, 0.2]` sigma
    /// range is a property of the random generator, not of the type, so
    /// degenerate spreads are allowed here for targeted tests.
    pub fn from_params(
        num_arms: usize,
        num_users: usize,
        horizon: u64,
        params: Vec<Vec<(f64, f64)>>,
    ) -> Result<Self, EnvError> {
        if num_arms == 0 || num_users == 0 || horizon == 0 {
            return Err(EnvError::InvalidDimension(
                "num_arms, num_users and horizon must be positive".into(),
            ));
        }
        let tran_num = params.len() as u64;
        if tran_num == 0 || tran_num > horizon {
            return Err(EnvError::TooManySegments { tran_num, horizon });
        }
        for seg in &params {
            if seg.len() != num_arms {
                return Err(EnvError::InvalidDimension(format!(
                    "segment has {} arm entries, expected {num_arms}",
                    seg.len()
                )));
            }
            for &(mu, sigma) in seg {
                if !(0.0..=1.0).contains(&mu) {
                    return Err(EnvError::InvalidParameter(format!("mean {mu} outside [0,1]")));
                }
                if !(sigma > 0.0) {
                    return Err(EnvError::InvalidParameter(format!("std {sigma} not positive")));
                }
            }
        }
        let segment_starts = uniform_partition_starts(horizon, tran_num);
        Ok(Self {
            num_arms,
            num_users,
            horizon,
            segment_starts,
            params,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn num_segments(&self) -> usize {
        self.params.len()
    }

    /// First round of each segment, starting at 1.
    pub fn segment_starts(&self) -> &[u64] {
        &self.segment_starts
    }

    /// Index of the segment containing round `t`.
    pub fn segment_of(&self, t: u64) -> Result<usize, EnvError> {
        if t < 1 || t > self.horizon {
            return Err(EnvError::IndexOutOfRange(format!(
                "round {t} outside [1, {}]",
                self.horizon
            )));
        }
        Ok(self.segment_starts.partition_point(|&s| s <= t) - 1)
    }

    /// `(mean, std)` governing arm `arm` (0-based) at round `t`.
    pub fn arm_params(&self, t: u64, arm: usize) -> Result<(f64, f64), EnvError> {
        if arm >= self.num_arms {
            return Err(EnvError::IndexOutOfRange(format!(
                "arm {arm} outside [0, {})",
                self.num_arms
            )));
        }
        let seg = self.segment_of(t)?;
        Ok(self.params[seg][arm])
    }
}

fn uniform_partition_starts(horizon: u64, tran_num: u64) -> Vec<u64> {
    (0..tran_num).map(|s| 1 + s * horizon / tran_num).collect()
}

/// Draws the full adversary: `tran_num` segments of near-equal length with
/// per-(arm, segment) means uniform on `[0, 1]` and standard deviations
/// uniform on `[0.1, 0.2]`, deterministic in `(inputs, seed)`.
pub fn build_adversarial_env(
    num_arms: usize,
    num_users: usize,
    horizon: u64,
    tran_num: u64,
    seed: u64,
) -> Result<SegmentedLossSpec, EnvError> {
    if num_arms < 2 {
        return Err(EnvError::InvalidDimension("need at least 2 arms".into()));
    }
    if num_users == 0 || horizon == 0 || tran_num == 0 {
        return Err(EnvError::InvalidDimension(
            "num_users, horizon and tran_num must be positive".into(),
        ));
    }
    if tran_num > horizon {
        return Err(EnvError::TooManySegments { tran_num, horizon });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, stream::ENV_PARAMS]));
    let params = (0..tran_num)
        .map(|_| {
            (0..num_arms)
                .map(|_| {
                    let mu: f64 = rng.gen_range(0.0..=1.0);
                    let sigma: f64 = rng.gen_range(SIGMA_MIN..=SIGMA_MAX);
                    (mu, sigma)
                })
                .collect()
        })
        .collect();
    SegmentedLossSpec::from_params(num_arms, num_users, horizon, params)
}

/// One draw from a Gaussian conditioned on `[lo, hi]` (true truncation via
/// rejection, never clipping). Aborts with a diagnostic if the rejection
/// loop fails to land inside the interval, which cannot happen for the
/// parameter ranges the generator produces.
pub fn sample_truncated_gaussian<R: Rng>(mean: f64, std: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    assert!(lo < hi, "truncation interval [{lo}, {hi}] is empty");
    assert!(std > 0.0, "std must be positive, got {std}");
    let normal = Normal::new(mean, std).expect("finite mean and positive std");
    for _ in 0..REJECTION_CAP {
        let x = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    panic!(
        "truncated-Gaussian rejection did not terminate after {REJECTION_CAP} draws \
         (mean={mean}, std={std}, range=[{lo}, {hi}])"
    );
}

/// Realizes the loss `l_i^j(t)` in `[0, 1]`: a truncated-Gaussian draw under
/// the (arm, segment-of-t) parameters, bit-identical for repeated queries of
/// the same `(seed, t, arm, user)`.
pub fn realize_loss(
    spec: &SegmentedLossSpec,
    seed: u64,
    t: u64,
    arm: usize,
    user: usize,
) -> Result<f64, EnvError> {
    if user >= spec.num_users {
        return Err(EnvError::IndexOutOfRange(format!(
            "user {user} outside [0, {})",
            spec.num_users
        )));
    }
    let (mu, sigma) = spec.arm_params(t, arm)?;
    let mut rng = SplitMix64::from_key(&[seed, stream::LOSS, t, arm as u64, user as u64]);
    Ok(sample_truncated_gaussian(mu, sigma, 0.0, 1.0, &mut rng))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Analytic mean of a Gaussian `(mu, sigma)` conditioned on `[lo, hi]`.
pub fn truncated_normal_mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let z = std_normal_cdf(b) - std_normal_cdf(a);
    if z < 1e-300 {
        // essentially all mass outside the interval; the conditional
        // distribution degenerates onto the nearer endpoint
        return mu.clamp(lo, hi);
    }
    mu + sigma * (std_normal_pdf(a) - std_normal_pdf(b)) / z
}

/// Analytic per-user expected loss of arm `arm` at round `t`.
pub fn expected_loss(spec: &SegmentedLossSpec, t: u64, arm: usize) -> Result<f64, EnvError> {
    let (mu, sigma) = spec.arm_params(t, arm)?;
    Ok(truncated_normal_mean(mu, sigma, 0.0, 1.0))
}

/// Total per-user expected loss of each arm over the full horizon.
/// Piecewise-constant segments make this a sum over segments, not rounds.
pub fn expected_loss_totals(spec: &SegmentedLossSpec) -> Vec<f64> {
    let mut totals = vec![0.0; spec.num_arms];
    let starts = spec.segment_starts();
    for seg in 0..spec.num_segments() {
        let first = starts[seg];
        let last = if seg + 1 < starts.len() {
            starts[seg + 1] - 1
        } else {
            spec.horizon
        };
        let len = (last - first + 1) as f64;
        for arm in 0..spec.num_arms {
            let (mu, sigma) = spec.params[seg][arm];
            totals[arm] += len * truncated_normal_mean(mu, sigma, 0.0, 1.0);
        }
    }
    totals
}

/// How user delays are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    /// Independent uniform integers on `[1, d_max]`.
    Uniform,
    /// Every delay equals `d_max`.
    Constant,
    /// Caller-supplied table, row-major `[round][user]`.
    Custom(Vec<u32>),
}

/// The oblivious delay table `d_t^j >= 1`, indexed by `(round, user)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySchedule {
    num_users: usize,
    horizon: u64,
    d_max: u32,
    table: Vec<u32>,
}

impl DelaySchedule {
    /// Independent uniform delays on `[1, d_max]`, deterministic in `seed`.
    pub fn uniform(num_users: usize, horizon: u64, d_max: u32, seed: u64) -> Result<Self, EnvError> {
        Self::build(num_users, horizon, d_max, DelayKind::Uniform, seed)
    }

    /// All delays equal to `d`.
    pub fn constant(num_users: usize, horizon: u64, d: u32) -> Result<Self, EnvError> {
        Self::build(num_users, horizon, d, DelayKind::Constant, 0)
    }

    pub fn build(
        num_users: usize,
        horizon: u64,
        d_max: u32,
        kind: DelayKind,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if num_users == 0 || horizon == 0 {
            return Err(EnvError::InvalidDimension(
                "num_users and horizon must be positive".into(),
            ));
        }
        if d_max == 0 {
            return Err(EnvError::InvalidParameter("d_max must be >= 1".into()));
        }
        let len = horizon as usize * num_users;
        let table = match kind {
            DelayKind::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, stream::DELAY]));
                (0..len).map(|_| rng.gen_range(1..=d_max)).collect()
            }
            DelayKind::Constant => vec![d_max; len],
            DelayKind::Custom(t) => {
                if t.len() != len {
                    return Err(EnvError::InvalidDimension(format!(
                        "custom delay table has {} entries, expected {len}",
                        t.len()
                    )));
                }
                if let Some(&bad) = t.iter().find(|&&d| d < 1 || d > d_max) {
                    return Err(EnvError::InvalidParameter(format!(
                        "delay {bad} outside [1, {d_max}]"
                    )));
                }
                t
            }
        };
        Ok(Self {
            num_users,
            horizon,
            d_max,
            table,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// Delay of user `user`'s feedback for the round-`t` action.
    pub fn delay(&self, t: u64, user: usize) -> u32 {
        debug_assert!(t >= 1 && t <= self.horizon && user < self.num_users);
        self.table[(t - 1) as usize * self.num_users + user]
    }

    /// Sum of every delay in the table.
    pub fn full_delay_sum(&self) -> u64 {
        self.table.iter().map(|&d| d as u64).sum()
    }

    /// Sum of delays over events that are delivered within the horizon,
    /// i.e. pairs with `t + d_t^j <= T`. Delivery is policy-independent.
    pub fn delivered_delay_sum(&self) -> u64 {
        let mut sum = 0u64;
        for t in 1..=self.horizon {
            for j in 0..self.num_users {
                let d = self.delay(t, j) as u64;
                if t + d <= self.horizon {
                    sum += d;
                }
            }
        }
        sum
    }

    /// Number of events whose feedback would arrive past the horizon.
    pub fn omega_count(&self) -> u64 {
        let mut count = 0u64;
        for t in 1..=self.horizon {
            for j in 0..self.num_users {
                if t + self.delay(t, j) as u64 > self.horizon {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Uniform delay schedule on `[1, d_max]`.
pub fn build_delay_schedule(
    num_users: usize,
    horizon: u64,
    d_max: u32,
    seed: u64,
) -> Result<DelaySchedule, EnvError> {
    DelaySchedule::uniform(num_users, horizon, d_max, seed)
}
