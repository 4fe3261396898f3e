//! One-dimensional PAC threshold calibration.
//!
//! A prediction set `C_tau(x) = { y : f(x, y) >= tau }` errs on an example
//! exactly when the true-label score is below `tau`. The error count is a
//! step function of `tau` with breakpoints at the observed scores, so the
//! largest admissible `tau` is an order statistic of the sorted scores.

use serde::{Deserialize, Serialize};

use crate::binomial::{k_star, RiskBudget};
use crate::error::{Error, Result};

/// The score the calibrated score function assigns to an example's true
/// label. A label that was never scored is recorded as `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub true_score: f64,
}

impl CalibrationRecord {
    pub fn new(true_score: f64) -> Result<Self> {
        if !true_score.is_finite() || true_score < 0.0 {
            return Err(Error::domain(format!("true score must be finite and nonnegative, got {true_score}")));
        }
        Ok(Self { true_score })
    }

    /// The record used when the true label has no score.
    pub fn missing() -> Self {
        Self { true_score: 0.0 }
    }
}

/// Provenance of a calibrated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub budget: RiskBudget,
    pub n_calibration: u64,
    /// `None` when the budget was infeasible for `n_calibration`.
    pub k_star: Option<u64>,
}

/// A set-membership threshold, either calibrated or set by hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    #[serde(with = "tau_serde")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
}

impl Threshold {
    /// A hand-set threshold. `f64::INFINITY` denotes the empty set.
    pub fn fixed(tau: f64) -> Self {
        assert!(tau >= 0.0, "threshold must be nonnegative");
        Self { tau, calibration: None }
    }

    /// The all-inclusive threshold.
    pub fn trivial() -> Self {
        Self::fixed(0.0)
    }

    /// The threshold whose set is always empty.
    pub fn empty_set() -> Self {
        Self::fixed(f64::INFINITY)
    }

    /// True when the threshold came from an infeasible calibration.
    pub fn is_infeasible(&self) -> bool {
        matches!(self.calibration, Some(CalibrationInfo { k_star: None, .. }))
    }

    #[inline]
    pub fn admits(&self, score: f64) -> bool {
        score >= self.tau
    }
}

mod tau_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
        if tau.is_infinite() {
            Repr::Text("inf".into()).serialize(s)
        } else {
            Repr::Num(*tau).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}

/// Largest `tau` such that at most `k*` calibration scores fall strictly
/// below it. Returns `tau = 0` when `k*` does not exist.
pub fn calibrate_threshold(records: &[CalibrationRecord], budget: RiskBudget) -> Result<Threshold> {
    if records.is_empty() {
        return Err(Error::domain("cannot calibrate on an empty record list"));
    }
    let n = records.len() as u64;
    let k = k_star(n, budget)?;
    let tau = match k {
        None => 0.0,
        Some(k) => {
            let mut scores: Vec<f64> = records.iter().map(|r| r.true_score).collect();
            let (_, kth, _) = scores.select_nth_unstable_by(k as usize, f64::total_cmp);
            *kth
        }
    };
    Ok(Threshold { tau, calibration: Some(CalibrationInfo { budget, n_calibration: n, k_star: k }) })
}

/// Number of records whose true label falls outside the set.
pub fn error_count(tau: &Threshold, records: &[CalibrationRecord]) -> usize {
    records.iter().filter(|r| !tau.admits(r.true_score)).count()
}

/// Fraction of records whose true label falls outside the set.
pub fn empirical_error(tau: &Threshold, records: &[CalibrationRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::domain("empirical error of an empty record list"));
    }
    Ok(error_count(tau, records) as f64 / records.len() as f64)
}
