//! Simulated user-arrival loop driving the bandit against ground-truth
//! click-through rates.
//!
//! One user arrives per iteration: Thompson sampling picks an arm, a Bernoulli
//! draw against the arm's true rate decides the click, and the arm's posterior
//! is updated. At the configured cadence (and always at the final iteration)
//! the value-remaining check runs and may stop the experiment once burn-in has
//! passed.
//!
//! A master seed feeds three independent RNG substreams (selection, clicks,
//! termination checks), so changing `mc_samples` or `check_interval` never
//! perturbs the arrival/click sequence.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{
    self, BanditArm, BanditError, BetaPosterior, ExperimentConfig, ValueRemainingReport,
};
use crate::streams::substream;

const STREAM_SELECTION: u64 = 0;
const STREAM_CLICKS: u64 = 1;
const STREAM_VALUE_REMAINING: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One simulated strategy: its id and the ground-truth click rate the
/// environment answers with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub id: String,
    pub true_ctr: f64,
}

impl ArmSpec {
    pub fn new(id: impl Into<String>, true_ctr: f64) -> Self {
        Self {
            id: id.into(),
            true_ctr,
        }
    }
}

fn validate_specs(specs: &[ArmSpec]) -> Result<(), SimError> {
    if specs.len() < 2 {
        return Err(SimError::InvalidArgument(format!(
            "at least 2 arms required, got {}",
            specs.len()
        )));
    }
    for spec in specs {
        if !(spec.true_ctr.is_finite() && spec.true_ctr > 0.0 && spec.true_ctr < 1.0) {
            return Err(SimError::InvalidArgument(format!(
                "arm {:?}: true_ctr must lie in (0, 1), got {}",
                spec.id, spec.true_ctr
            )));
        }
    }
    for (i, spec) in specs.iter().enumerate() {
        if specs[..i].iter().any(|other| other.id == spec.id) {
            return Err(SimError::InvalidArgument(format!(
                "duplicate arm id {:?}",
                spec.id
            )));
        }
    }
    Ok(())
}

/// Snapshot of the experiment at one recorded iteration. The quantile is
/// present only on iterations where a termination check ran (at or after
/// burn-in).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub impressions: Vec<u64>,
    pub clicks: Vec<u64>,
    pub posterior_means: Vec<f64>,
    pub quantile_value_remaining: Option<f64>,
}

impl TrajectoryPoint {
    fn capture(iteration: u64, arms: &[BanditArm], quantile: Option<f64>) -> Self {
        Self {
            iteration,
            impressions: arms.iter().map(BanditArm::impressions).collect(),
            clicks: arms.iter().map(BanditArm::clicks).collect(),
            posterior_means: arms.iter().map(|a| a.posterior().mean()).collect(),
            quantile_value_remaining: quantile,
        }
    }
}

/// Full record of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Arm ids in spec order; all per-arm vectors align with this.
    pub arm_ids: Vec<String>,
    /// Winner named by the last value-remaining check.
    pub winner_id: String,
    pub iterations_run: u64,
    /// Per-arm impressions.
    pub traffic: Vec<u64>,
    /// Per-arm clicks.
    pub clicks: Vec<u64>,
    /// True iff the value-remaining rule stopped the run before (or exactly
    /// at) the iteration cap; false when the cap alone ended it.
    pub terminated_early: bool,
    /// The value-remaining report that decided the winner.
    pub final_report: ValueRemainingReport,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Run one experiment to termination or the iteration cap.
pub fn run_experiment(
    specs: &[ArmSpec],
    config: &ExperimentConfig,
) -> Result<ExperimentResult, SimError> {
    validate_specs(specs)?;
    config.validate()?;

    let prior = BetaPosterior::new(config.prior_a, config.prior_b)?;
    let mut arms: Vec<BanditArm> = specs
        .iter()
        .map(|spec| BanditArm::new(spec.id.clone(), prior.clone()))
        .collect();

    let mut rng_select = substream(config.seed, STREAM_SELECTION);
    let mut rng_click = substream(config.seed, STREAM_CLICKS);
    let mut rng_check = substream(config.seed, STREAM_VALUE_REMAINING);

    let mut trajectory = Vec::new();
    let mut final_report: Option<ValueRemainingReport> = None;
    let mut terminated_early = false;
    let mut iterations_run = config.max_iterations;

    for iteration in 1..=config.max_iterations {
        let chosen = bandit::thompson_select(&arms, &mut rng_select)?;
        let clicked = rng_click.random::<f64>() < specs[chosen].true_ctr;
        arms[chosen].record_outcome(clicked);

        let is_last = iteration == config.max_iterations;
        if iteration % config.check_interval != 0 && !is_last {
            continue;
        }

        let mut quantile = None;
        let mut stop = false;
        if iteration >= config.burn_in {
            let mut report = bandit::value_remaining(
                &arms,
                config.significance,
                config.mc_samples,
                &mut rng_check,
            )?;
            report.terminated = bandit::should_terminate(iteration, &report, config);
            stop = report.terminated;
            quantile = Some(report.quantile_value_remaining);
            final_report = Some(report);
        }
        trajectory.push(TrajectoryPoint::capture(iteration, &arms, quantile));
        if stop {
            terminated_early = true;
            iterations_run = iteration;
            break;
        }
    }

    // burn_in < max_iterations guarantees the final iteration ran a check.
    let final_report = final_report.expect("final iteration always checks");
    Ok(ExperimentResult {
        arm_ids: specs.iter().map(|s| s.id.clone()).collect(),
        winner_id: specs[final_report.winner_index].id.clone(),
        iterations_run,
        traffic: arms.iter().map(BanditArm::impressions).collect(),
        clicks: arms.iter().map(BanditArm::clicks).collect(),
        terminated_early,
        final_report,
        trajectory,
    })
}

/// Aggregate over independent replications of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub arm_ids: Vec<String>,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Runs each arm won, in arm order.
    pub win_counts: Vec<u64>,
    pub terminated_early_count: usize,
    /// Iterations each run lasted, in run order.
    pub termination_iterations: Vec<u64>,
    /// Per run, each arm's share of total traffic.
    pub traffic_shares: Vec<Vec<f64>>,
    pub mean_traffic_share: Vec<f64>,
}

/// Run `n_runs` independent experiments with seeds `base_seed..base_seed +
/// n_runs` and aggregate their outcomes.
pub fn run_replications(
    specs: &[ArmSpec],
    config: &ExperimentConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<ReplicationSummary, SimError> {
    if n_runs < 1 {
        return Err(SimError::InvalidArgument(
            "n_runs must be at least 1".into(),
        ));
    }
    validate_specs(specs)?;
    config.validate()?;

    let n_arms = specs.len();
    let mut win_counts = vec![0u64; n_arms];
    let mut terminated_early_count = 0usize;
    let mut termination_iterations = Vec::with_capacity(n_runs);
    let mut traffic_shares = Vec::with_capacity(n_runs);
    let mut share_sums = vec![0.0f64; n_arms];

    for run in 0..n_runs {
        let mut run_config = config.clone();
        run_config.seed = base_seed.wrapping_add(run as u64);
        let result = run_experiment(specs, &run_config)?;

        let winner = result
            .arm_ids
            .iter()
            .position(|id| *id == result.winner_id)
            .expect("winner id comes from arm_ids");
        win_counts[winner] += 1;
        if result.terminated_early {
            terminated_early_count += 1;
        }
        termination_iterations.push(result.iterations_run);
        let total = result.iterations_run as f64;
        let shares: Vec<f64> = result.traffic.iter().map(|&t| t as f64 / total).collect();
        for (sum, share) in share_sums.iter_mut().zip(&shares) {
            *sum += share;
        }
        traffic_shares.push(shares);
    }

    let mean_traffic_share = share_sums.iter().map(|s| s / n_runs as f64).collect();
    Ok(ReplicationSummary {
        arm_ids: specs.iter().map(|s| s.id.clone()).collect(),
        n_runs,
        base_seed,
        win_counts,
        terminated_early_count,
        termination_iterations,
        traffic_shares,
        mean_traffic_share,
    })
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    iteration: u64,
    arm_id: &'a str,
    impressions: u64,
    clicks: u64,
    posterior_mean: f64,
    quantile_value_remaining: Option<f64>,
}

/// Write the run trajectory as CSV, one row per arm per recorded iteration.
/// The quantile column is empty on iterations without a termination check.
pub fn write_trajectory_csv<W: io::Write>(
    result: &ExperimentResult,
    writer: W,
) -> Result<(), SimError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for point in &result.trajectory {
        for (i, arm_id) in result.arm_ids.iter().enumerate() {
            wtr.serialize(TrajectoryRow {
                iteration: point.iteration,
                arm_id,
                impressions: point.impressions[i],
                clicks: point.clicks[i],
                posterior_mean: point.posterior_means[i],
                quantile_value_remaining: point.quantile_value_remaining,
            })?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config() -> ExperimentConfig {
        ExperimentConfig {
            burn_in: 200,
            mc_samples: 1000,
            check_interval: 50,
            max_iterations: 600,
            seed: 11,
            ..ExperimentConfig::default()
        }
    }

    fn two_arms() -> Vec<ArmSpec> {
        vec![ArmSpec::new("a", 0.05), ArmSpec::new("b", 0.30)]
    }

    #[test]
    fn rejects_invalid_specs() {
        let config = fast_config();
        assert!(run_experiment(&[ArmSpec::new("a", 0.1)], &config).is_err());
        let dup = vec![ArmSpec::new("a", 0.1), ArmSpec::new("a", 0.2)];
        assert!(run_experiment(&dup, &config).is_err());
        let out_of_range = vec![ArmSpec::new("a", 0.0), ArmSpec::new("b", 0.2)];
        assert!(run_experiment(&out_of_range, &config).is_err());
    }

    #[test]
    fn totals_are_conserved() {
        let result = run_experiment(&two_arms(), &fast_config()).unwrap();
        let traffic: u64 = result.traffic.iter().sum();
        assert_eq!(traffic, result.iterations_run);
        for (clicks, impressions) in result.clicks.iter().zip(&result.traffic) {
            assert!(clicks <= impressions);
        }
    }

    #[test]
    fn trajectory_is_strictly_increasing_and_gated_by_burn_in() {
        let config = fast_config();
        let result = run_experiment(&two_arms(), &config).unwrap();
        for pair in result.trajectory.windows(2) {
            assert!(pair[0].iteration < pair[1].iteration);
        }
        for point in &result.trajectory {
            assert_eq!(
                point.quantile_value_remaining.is_some(),
                point.iteration >= config.burn_in,
                "quantile present iff checked (iteration {})",
                point.iteration
            );
        }
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let config = fast_config();
        let first = run_experiment(&two_arms(), &config).unwrap();
        let second = run_experiment(&two_arms(), &config).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn single_replication_matches_single_run() {
        let config = fast_config();
        let summary = run_replications(&two_arms(), &config, 1, config.seed).unwrap();
        let single = run_experiment(&two_arms(), &config).unwrap();

        assert_eq!(summary.n_runs, 1);
        let winner = summary
            .arm_ids
            .iter()
            .position(|id| *id == single.winner_id)
            .unwrap();
        assert_eq!(summary.win_counts[winner], 1);
        assert_eq!(summary.termination_iterations, vec![single.iterations_run]);
        let expected_shares: Vec<f64> = single
            .traffic
            .iter()
            .map(|&t| t as f64 / single.iterations_run as f64)
            .collect();
        assert_eq!(summary.traffic_shares, vec![expected_shares.clone()]);
        assert_eq!(summary.mean_traffic_share, expected_shares);
    }

    #[test]
    fn rejects_zero_replications() {
        assert!(run_replications(&two_arms(), &fast_config(), 0, 1).is_err());
    }

    #[test]
    fn trajectory_csv_has_contract_header_and_empty_quantiles() {
        let result = run_experiment(&two_arms(), &fast_config()).unwrap();
        let mut buffer = Vec::new();
        write_trajectory_csv(&result, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,arm_id,impressions,clicks,posterior_mean,quantile_value_remaining"
        );
        let first_row = lines.next().unwrap();
        assert!(
            first_row.starts_with("50,a,") && first_row.ends_with(','),
            "pre-burn-in rows leave the quantile empty: {first_row}"
        );
        let result_rows = text.lines().count() - 1;
        assert_eq!(result_rows, 2 * result.trajectory.len());
        let last_row = text.lines().last().unwrap();
        assert!(
            !last_row.ends_with(','),
            "final check row carries a quantile: {last_row}"
        );
    }
}
