//! # banditlab
//!
//! A simulation engine for adversarial multi-armed bandits with multi-user
//! delayed feedback. One player plays `N` arms against `M` users whose
//! losses are fixed in advance by an oblivious adversary; each user's
//! feedback arrives after a bounded, also pre-committed, delay.
//!
//! The crate provides:
//!
//! - [`env`]: segmented truncated-Gaussian loss processes and delay
//!   schedules, realized deterministically from seeds;
//! - [`policy`]: the exponential-weights learners `MudExp3` (known horizon)
//!   and `AmudExp3` (horizon-free doubling trick) plus delayed-UCB,
//!   successive-elimination, oracle, and random baselines;
//! - [`sim`]: the round loop, feedback queue, regret metrics, and
//!   replication aggregation;
//! - [`bounds`]: closed-form regret-bound calculators and trajectory
//!   checkers for the per-round and per-epoch inequalities;
//! - [`config`] / [`runner`] / [`plot`]: the experiment harness behind the
//!   `banditlab` CLI.
//!
//! ## A complete episode
//!
//! ```
//! use banditlab::env::{build_adversarial_env, build_delay_schedule};
//! use banditlab::policy::{recommended_eta, MudExp3};
//! use banditlab::sim::{run_episode, EpisodeSeeds};
//!
//! let (n, m, horizon, d_max) = (10, 10, 500, 10);
//! let spec = build_adversarial_env(n, m, horizon, 3, 42).unwrap();
//! let delays = build_delay_schedule(m, horizon, d_max, 42).unwrap();
//!
//! let eta = recommended_eta(n, m, horizon, delays.delivered_delay_sum());
//! let mut policy = MudExp3::new(n, m, eta, d_max);
//!
//! let trace = run_episode(
//!     &mut policy,
//!     &spec,
//!     &delays,
//!     EpisodeSeeds { loss_seed: 1, policy_seed: 2 },
//! )
//! .unwrap();
//!
//! assert_eq!(trace.rows.len(), 500);
//! assert_eq!(trace.delivered + trace.omega_count, (m as u64) * 500);
//! ```

pub mod bounds;
pub mod config;
pub mod env;
pub mod plot;
pub mod policy;
pub mod runner;
pub mod seeding;
pub mod sim;
