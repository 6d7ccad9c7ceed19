use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use banditlab::bounds::{theorem1_bound, theorem2_bound, BoundInputs};
use banditlab::config::{load_config, ConfigError, EtaMode, ExperimentConfig};
use banditlab::policy::{recommended_eta, truncate_learning_rate};
use banditlab::runner::{reproduce_paper_suite, run_experiment, SuiteOptions};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "banditlab", about = "Delayed-feedback bandit simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed, overriding the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reproduce the canned comparison figures.
    Suite {
        /// Long-horizon version of every curve figure.
        #[arg(long)]
        full: bool,
        /// Output directory (default: suite_out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Fail (exit 3) if the expected policy orderings do not hold.
        #[arg(long)]
        check: bool,
    },
    /// Print the theoretical regret bounds for a config without running it.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_validated(path: &PathBuf) -> Result<ExperimentConfig, ConfigError> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = match load_validated(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            match run_experiment(&cfg) {
                Ok(output) => {
                    for row in &output.summary {
                        println!(
                            "{:<8} mean final loss {:>12.3}  mean final regret {:>12.3}",
                            row.policy, row.mean_final_loss, row.mean_final_regret
                        );
                    }
                    println!(
                        "wrote {} and {}",
                        output.trace_path.unwrap().display(),
                        output.summary_path.unwrap().display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Suite {
            full,
            out,
            seed,
            check,
        } => {
            let mut opts = SuiteOptions::new(full);
            if let Some(s) = seed {
                opts.master_seed = s;
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from("suite_out"));
            match reproduce_paper_suite(&out_dir, &opts) {
                Ok(report) => {
                    println!(
                        "suite wrote {} figures and {}",
                        report.svg_paths.len(),
                        report.summary_path.display()
                    );
                    for w in &report.warnings {
                        println!("warning: {w}");
                    }
                    for f in &report.hard_failures {
                        println!("ordering failure: {f}");
                    }
                    if check && !report.hard_failures.is_empty() {
                        ExitCode::from(EXIT_CHECK)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("suite failed: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Bounds { config } => {
            let cfg = match load_validated(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            // schedule-free estimates: delays at their expected value, and
            // negligible past-horizon mass
            let est_delay_sum =
                cfg.horizon * cfg.num_users as u64 * (cfg.d_max as u64 + 1) / 2;
            let eta = match cfg.eta_mode {
                EtaMode::Fixed(v) => v,
                _ => recommended_eta(cfg.num_arms, cfg.num_users, cfg.horizon, est_delay_sum),
            };
            let eta = truncate_learning_rate(eta, cfg.num_users, cfg.num_arms, cfg.d_max);
            let t1 = theorem1_bound(&BoundInputs {
                num_arms: cfg.num_arms,
                num_users: cfg.num_users,
                horizon: cfg.horizon,
                eta,
                sum_delivered_delays: est_delay_sum as f64,
                omega_count: 0,
            });
            let t2 = theorem2_bound(
                cfg.num_arms,
                cfg.num_users,
                cfg.horizon,
                est_delay_sum as f64,
            );
            println!("N = {}, M = {}, T = {}, d_max = {}", cfg.num_arms, cfg.num_users, cfg.horizon, cfg.d_max);
            println!("estimated delay sum = {est_delay_sum}");
            println!("fixed-rate learner: eta' = {eta:.6e}, regret bound = {t1:.3e}");
            println!("adaptive learner: regret bound = {t2:.3e}");
            ExitCode::SUCCESS
        }
    }
}
