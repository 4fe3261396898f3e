//! Monte Carlo certification of the `(epsilon, delta)` guarantee: draw many
//! calibration sets, calibrate on each, and count how often the exact error
//! of the calibrated set exceeds `epsilon`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{binom_cdf, RiskBudget};
use crate::calibrate::{calibrate_threshold, CalibrationRecord, Threshold};
use crate::error::{Error, Result};
use crate::sim::finite::FiniteDistribution;

/// Seed of trial `index`: a SplitMix64 step over `base + (index + 1) * phi`,
/// so any trial can be replayed on its own.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacTrial {
    pub tau: Threshold,
    pub true_error: f64,
    pub violated: bool,
}

/// Exact error of `C_tau` on a score distribution: `P[score < tau]`.
pub fn score_true_error(dist: &FiniteDistribution<CalibrationRecord>, tau: &Threshold) -> f64 {
    dist.true_error(|r| !tau.admits(r.true_score))
}

/// One calibrate-then-measure trial on a distribution of true-label scores.
pub fn pac_trial(
    dist: &FiniteDistribution<CalibrationRecord>,
    n: usize,
    budget: RiskBudget,
    trial_seed: u64,
) -> Result<PacTrial> {
    if n == 0 {
        return Err(Error::domain("calibration size must be positive"));
    }
    let mut rng = trial_rng(trial_seed);
    let sample: Vec<CalibrationRecord> = dist.sample(n, &mut rng).into_iter().copied().collect();
    let tau = calibrate_threshold(&sample, budget)?;
    let true_error = score_true_error(dist, &tau);
    Ok(PacTrial { tau, true_error, violated: true_error > budget.epsilon() })
}

/// Violation count over a batch of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub trials: usize,
    pub violations: usize,
    pub fraction: f64,
    /// Two-sided 95% Clopper-Pearson interval on the violation probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_error: f64,
    pub max_error: f64,
}

impl ViolationSummary {
    pub fn from_trials(errors: &[f64], violated: &[bool]) -> Result<Self> {
        let trials = violated.len();
        if trials == 0 {
            return Err(Error::domain("no trials"));
        }
        let violations = violated.iter().filter(|&&v| v).count();
        let (ci_low, ci_high) = clopper_pearson(violations as u64, trials as u64, 0.05)?;
        Ok(Self {
            trials,
            violations,
            fraction: violations as f64 / trials as f64,
            ci_low,
            ci_high,
            mean_error: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
            max_error: errors.iter().copied().fold(0.0, f64::max),
        })
    }
}

/// Exact binomial confidence interval by bisection on the tail functions.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::domain("need 0 <= successes <= trials, trials > 0"));
    }
    let half = alpha / 2.0;
    let bisect = |pred: &dyn Fn(f64) -> Result<bool>| -> Result<f64> {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pred(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let low = if successes == 0 {
        0.0
    } else {
        // largest p with P[X >= x] <= alpha/2
        bisect(&|p| Ok(1.0 - binom_cdf(successes - 1, trials, p)? <= half))?
    };
    let high = if successes == trials {
        1.0
    } else {
        // smallest p with P[X <= x] <= alpha/2
        bisect(&|p| Ok(binom_cdf(successes, trials, p)? > half))?
    };
    Ok((low, high))
}

/// Run `trials` independent [`pac_trial`]s with seeds from
/// [`derive_seed`]. The result does not depend on `parallel`.
pub fn mc_verify(
    dist: &FiniteDistribution<CalibrationRecord>,
    n: usize,
    budget: RiskBudget,
    trials: usize,
    base_seed: u64,
    parallel: bool,
) -> Result<ViolationSummary> {
    if trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    let run = |i: usize| pac_trial(dist, n, budget, derive_seed(base_seed, i as u64));
    let results: Vec<PacTrial> = if parallel {
        (0..trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..trials).map(run).collect::<Result<_>>()?
    };
    let errors: Vec<f64> = results.iter().map(|r| r.true_error).collect();
    let violated: Vec<bool> = results.iter().map(|r| r.violated).collect();
    ViolationSummary::from_trials(&errors, &violated)
}

/// A fixed score distribution on a 21-point grid with a mixture shape:
/// most mass near 1, a tail toward 0, and an atom at 0 for unscored labels.
pub fn standard_score_distribution() -> FiniteDistribution<CalibrationRecord> {
    let levels = 20;
    let mut weights: Vec<f64> = (0..=levels)
        .map(|i| {
            let s = i as f64 / levels as f64;
            (6.0 * s).exp() + 2.0
        })
        .collect();
    weights[0] += 10.0;
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let head: f64 = probs[..levels].iter().sum();
    probs[levels] = 1.0 - head;
    let outcomes = (0..=levels).map(|i| CalibrationRecord { true_score: i as f64 / levels as f64 }).collect();
    FiniteDistribution::new(outcomes, probs).expect("standard distribution is valid")
}
