//! Beta-Bernoulli arm state, Thompson-sampling selection, and the Monte-Carlo
//! value-remaining termination criterion.
//!
//! Each arm's unknown click-through rate is held as a `Beta(a, b)` posterior.
//! Selection samples one rate per arm and picks the argmax; outcomes update the
//! posterior conjugately. A termination check draws `mc_samples` rate vectors
//! from the current posteriors, finds which arm wins the most draws, and
//! measures the `(1 - significance)`-quantile of the relative shortfall of that
//! winner against the per-draw best arm. The experiment may stop once that
//! quantile falls below a configured threshold.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("invalid Beta parameters a={a}, b={b}: both must be positive and finite")]
    InvalidBetaParams { a: f64, b: f64 },
    #[error("arm list is empty")]
    EmptyArms,
    #[error("at least 2 arms required, got {0}")]
    TooFewArms(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inconsistent arm state: clicks {clicks} exceed impressions {impressions}")]
    InconsistentCounts { clicks: u64, impressions: u64 },
}

/// Conjugate posterior over one arm's click-through rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaPosterior {
    a: f64,
    b: f64,
}

impl BetaPosterior {
    pub fn new(a: f64, b: f64) -> Result<Self, BanditError> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(BanditError::InvalidBetaParams { a, b });
        }
        Ok(Self { a, b })
    }

    /// Uniform Beta(1, 1) prior.
    pub fn uniform() -> Self {
        Self { a: 1.0, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Posterior mean `a / (a + b)`, always inside (0, 1).
    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    /// Conjugate update: success bumps `a`, failure bumps `b`.
    pub fn observe(&mut self, success: bool) {
        if success {
            self.a += 1.0;
        } else {
            self.b += 1.0;
        }
    }

    /// One posterior draw, via two Gamma variates: `G(a) / (G(a) + G(b))`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    fn sampler(&self) -> BetaSampler {
        BetaSampler {
            ga: Gamma::new(self.a, 1.0).expect("shape validated at construction"),
            gb: Gamma::new(self.b, 1.0).expect("shape validated at construction"),
        }
    }
}

/// Precomputed Gamma pair for repeated draws from one posterior.
struct BetaSampler {
    ga: Gamma<f64>,
    gb: Gamma<f64>,
}

impl BetaSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ga = self.ga.sample(rng);
        let gb = self.gb.sample(rng);
        let sum = ga + gb;
        if sum > 0.0 {
            (ga / sum).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
        } else {
            // Unreachable short of double Gamma underflow.
            0.5
        }
    }
}

/// One strategy under test: posterior belief plus raw traffic counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArmState", into = "ArmState")]
pub struct BanditArm {
    id: String,
    posterior: BetaPosterior,
    impressions: u64,
    clicks: u64,
}

impl BanditArm {
    pub fn new(id: impl Into<String>, prior: BetaPosterior) -> Self {
        Self {
            id: id.into(),
            posterior: prior,
            impressions: 0,
            clicks: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn posterior(&self) -> &BetaPosterior {
        &self.posterior
    }

    pub fn impressions(&self) -> u64 {
        self.impressions
    }

    pub fn clicks(&self) -> u64 {
        self.clicks
    }

    /// Empirical click-through rate: clicks over impressions (0 before traffic).
    pub fn empirical_ctr(&self) -> f64 {
        if self.impressions == 0 {
            0.0
        } else {
            self.clicks as f64 / self.impressions as f64
        }
    }

    /// Record one served impression and whether it was clicked, updating the
    /// posterior conjugately.
    pub fn record_outcome(&mut self, clicked: bool) {
        self.impressions += 1;
        if clicked {
            self.clicks += 1;
        }
        self.posterior.observe(clicked);
    }
}

/// Flat wire form of [`BanditArm`]: `{"id", "a", "b", "impressions", "clicks"}`.
#[derive(Serialize, Deserialize)]
struct ArmState {
    id: String,
    a: f64,
    b: f64,
    impressions: u64,
    clicks: u64,
}

impl From<BanditArm> for ArmState {
    fn from(arm: BanditArm) -> Self {
        Self {
            id: arm.id,
            a: arm.posterior.a,
            b: arm.posterior.b,
            impressions: arm.impressions,
            clicks: arm.clicks,
        }
    }
}

impl TryFrom<ArmState> for BanditArm {
    type Error = BanditError;

    fn try_from(state: ArmState) -> Result<Self, Self::Error> {
        if state.clicks > state.impressions {
            return Err(BanditError::InconsistentCounts {
                clicks: state.clicks,
                impressions: state.impressions,
            });
        }
        Ok(Self {
            id: state.id,
            posterior: BetaPosterior::new(state.a, state.b)?,
            impressions: state.impressions,
            clicks: state.clicks,
        })
    }
}

/// Stopping-rule and run parameters for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Prior successes for every arm.
    pub prior_a: f64,
    /// Prior failures for every arm.
    pub prior_b: f64,
    /// Minimum iterations before the stopping rule may fire.
    pub burn_in: u64,
    /// Tail mass excluded by the quantile check (the rule's alpha).
    pub significance: f64,
    /// Relative value-remaining level below which the experiment may stop.
    pub value_remaining_threshold: f64,
    /// Monte-Carlo draws per termination check.
    pub mc_samples: usize,
    /// Iterations between termination checks.
    pub check_interval: u64,
    /// Hard cap on iterations when the stopping rule never fires.
    pub max_iterations: u64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            prior_a: 1.0,
            prior_b: 1.0,
            burn_in: 1500,
            significance: 0.05,
            value_remaining_threshold: 0.01,
            mc_samples: 10_000,
            check_interval: 1,
            max_iterations: 100_000,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BanditError> {
        BetaPosterior::new(self.prior_a, self.prior_b)?;
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(BanditError::InvalidArgument(format!(
                "significance must lie in (0, 1), got {}",
                self.significance
            )));
        }
        if !(self.value_remaining_threshold > 0.0 && self.value_remaining_threshold < 1.0) {
            return Err(BanditError::InvalidArgument(format!(
                "value_remaining_threshold must lie in (0, 1), got {}",
                self.value_remaining_threshold
            )));
        }
        if self.mc_samples < 1000 {
            return Err(BanditError::InvalidArgument(format!(
                "mc_samples must be at least 1000 for stable quantile estimates, got {}",
                self.mc_samples
            )));
        }
        if self.check_interval == 0 {
            return Err(BanditError::InvalidArgument(
                "check_interval must be at least 1".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(BanditError::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.burn_in >= self.max_iterations {
            return Err(BanditError::InvalidArgument(format!(
                "burn_in ({}) must be smaller than max_iterations ({})",
                self.burn_in, self.max_iterations
            )));
        }
        Ok(())
    }
}

/// Outcome of one Monte-Carlo termination check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRemainingReport {
    /// Arm that won the largest share of Monte-Carlo draws (ties to lowest index).
    pub winner_index: usize,
    /// Fraction of draws each arm won; sums to 1.
    pub win_fractions: Vec<f64>,
    /// Empirical `(1 - significance)`-quantile of the per-draw relative value
    /// remaining `(max_i theta_i - theta_winner) / theta_winner`.
    pub quantile_value_remaining: f64,
    /// Filled in by the caller once the stopping rule has been applied.
    pub terminated: bool,
}

/// Sample one rate per arm and return the index of the largest draw.
///
/// Draws are consumed from `rng` in arm order, one Beta draw per arm.
pub fn thompson_select<R: Rng + ?Sized>(
    arms: &[BanditArm],
    rng: &mut R,
) -> Result<usize, BanditError> {
    if arms.is_empty() {
        return Err(BanditError::EmptyArms);
    }
    let mut best = 0usize;
    let mut best_theta = f64::NEG_INFINITY;
    for (i, arm) in arms.iter().enumerate() {
        let theta = arm.posterior.sample(rng);
        if theta > best_theta {
            best_theta = theta;
            best = i;
        }
    }
    Ok(best)
}

/// Monte-Carlo estimate of how much rate is still at stake if the current
/// front-runner were declared the winner now.
///
/// Per draw, each arm's rate is sampled from its posterior (arm order, then
/// draw order); the arm winning the most draws is the report's winner, and the
/// report's quantile is the empirical `(1 - significance)`-quantile of
/// `(max_i theta_i - theta_winner) / theta_winner` across draws.
pub fn value_remaining<R: Rng + ?Sized>(
    arms: &[BanditArm],
    significance: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Result<ValueRemainingReport, BanditError> {
    if arms.len() < 2 {
        return Err(BanditError::TooFewArms(arms.len()));
    }
    if mc_samples == 0 {
        return Err(BanditError::InvalidArgument(
            "mc_samples must be at least 1".into(),
        ));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(BanditError::InvalidArgument(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }

    let n_arms = arms.len();
    let samplers: Vec<BetaSampler> = arms.iter().map(|a| a.posterior.sampler()).collect();

    let mut draws = vec![0.0f64; mc_samples * n_arms];
    let mut win_counts = vec![0u64; n_arms];
    for d in 0..mc_samples {
        let row = &mut draws[d * n_arms..(d + 1) * n_arms];
        let mut best = 0usize;
        let mut best_theta = f64::NEG_INFINITY;
        for (i, sampler) in samplers.iter().enumerate() {
            let theta = sampler.sample(rng);
            row[i] = theta;
            if theta > best_theta {
                best_theta = theta;
                best = i;
            }
        }
        win_counts[best] += 1;
    }

    // Plurality winner, ties to the lowest index.
    let mut winner_index = 0usize;
    for i in 1..n_arms {
        if win_counts[i] > win_counts[winner_index] {
            winner_index = i;
        }
    }

    let mut shortfalls: Vec<f64> = (0..mc_samples)
        .map(|d| {
            let row = &draws[d * n_arms..(d + 1) * n_arms];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let winner_theta = row[winner_index];
            (max - winner_theta) / winner_theta
        })
        .collect();

    let quantile_value_remaining = empirical_quantile(&mut shortfalls, 1.0 - significance);
    let win_fractions = win_counts
        .iter()
        .map(|&c| c as f64 / mc_samples as f64)
        .collect();

    Ok(ValueRemainingReport {
        winner_index,
        win_fractions,
        quantile_value_remaining,
        terminated: false,
    })
}

/// Stopping rule: fire only at or beyond burn-in, and only when the remaining
/// value has dropped strictly below the configured threshold.
pub fn should_terminate(
    iteration: u64,
    report: &ValueRemainingReport,
    config: &ExperimentConfig,
) -> bool {
    iteration >= config.burn_in
        && report.quantile_value_remaining < config.value_remaining_threshold
}

/// Empirical `p`-quantile by sorted index: the value at (1-based) position
/// `ceil(p * n)` of the sorted data. Reorders `values` in place.
pub fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    let idx = quantile_index(p, values.len());
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

/// Zero-based index of the `ceil(p * n)`-th order statistic. The epsilon guard
/// keeps `p * n` that is an exact integer in real arithmetic from being pushed
/// over the next ceiling by float rounding.
fn quantile_index(p: f64, n: usize) -> usize {
    let rank = (p * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}
