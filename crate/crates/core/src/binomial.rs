//! Binomial tail evaluation and the maximal error count `k*` used by every
//! calibrator in the crate.
//!
//! The CDF is accumulated with the term recurrence
//! `t(i+1) = t(i) * (n - i) / (i + 1) * p / (1 - p)` in double-double
//! arithmetic and rounded once at the end, so exact ties such as
//! `F(17; 35, 0.5) = 0.5` compare correctly against `delta`. When the first
//! term `(1 - p)^n` would underflow, the same recurrence runs in log space
//! with a running log-sum-exp, so calibration sizes in the millions stay
//! accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `(epsilon, delta)` pair: with probability at least `1 - delta` over the
/// calibration draw, the prediction set errs with probability at most
/// `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Budget", into = "Budget")]
pub struct RiskBudget {
    epsilon: f64,
    delta: f64,
}

impl RiskBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// A plain `(epsilon, delta)` pair used in budget algebra. Unlike
/// [`RiskBudget`] the values may be zero or reach one; a composed budget with
/// either value `>= 1` carries no guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta }
    }

    /// True when the guarantee is vacuous.
    pub fn is_degenerate(&self) -> bool {
        self.epsilon >= 1.0 || self.delta >= 1.0
    }

    pub fn plus(self, other: Budget) -> Budget {
        Budget::new(self.epsilon + other.epsilon, self.delta + other.delta)
    }
}

impl From<RiskBudget> for Budget {
    fn from(b: RiskBudget) -> Self {
        Budget::new(b.epsilon, b.delta)
    }
}

impl TryFrom<Budget> for RiskBudget {
    type Error = Error;

    fn try_from(b: Budget) -> Result<Self> {
        RiskBudget::new(b.epsilon, b.delta)
    }
}

/// Below this log-magnitude the linear recurrence would start from a
/// subnormal or zero first term.
const LINEAR_LOG_FLOOR: f64 = -600.0;

/// Incremental evaluator of `F(0), F(1), ...` for `Binomial(n, p)`.
///
/// `binom_cdf` and `k_star` share this so that the scan in `k_star` sees
/// exactly the values `binom_cdf` would return.
struct CdfScan {
    n: u64,
    p: f64,
    next: u64,
    mode: ScanMode,
}

enum ScanMode {
    Linear {
        term: Dd,
        sum: Dd,
        p: Dd,
        q: Dd,
    },
    Log {
        log_term: f64,
        log_sum: f64,
        log_ratio: f64,
    },
    /// p == 0 or p == 1.
    Degenerate,
}

impl CdfScan {
    fn new(n: u64, p: f64) -> Self {
        let mode = if p == 0.0 || p == 1.0 {
            ScanMode::Degenerate
        } else {
            let log_first = n as f64 * (-p).ln_1p();
            if log_first > LINEAR_LOG_FLOOR {
                let q = Dd::from(1.0).add(Dd::from(-p));
                ScanMode::Linear { term: q.powu(n), sum: Dd::ZERO, p: Dd::from(p), q }
            } else {
                ScanMode::Log { log_term: log_first, log_sum: f64::NEG_INFINITY, log_ratio: p.ln() - (-p).ln_1p() }
            }
        };
        Self { n, p, next: 0, mode }
    }

    /// Returns `F(k)` for the next `k` in sequence.
    fn advance(&mut self) -> f64 {
        let k = self.next;
        self.next += 1;
        let (n, p) = (self.n, self.p);
        if k >= n {
            return 1.0;
        }
        let value = match &mut self.mode {
            ScanMode::Degenerate => {
                if p == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ScanMode::Linear { term, sum, p, q } => {
                *sum = sum.add(*term);
                let num = p.mul(Dd::from((n - k) as f64));
                let den = q.mul(Dd::from((k + 1) as f64));
                *term = term.mul(num.div(den));
                sum.hi
            }
            ScanMode::Log { log_term, log_sum, log_ratio } => {
                *log_sum = log_add(*log_sum, *log_term);
                *log_term += ((n - k) as f64 / (k + 1) as f64).ln() + *log_ratio;
                log_sum.exp()
            }
        };
        value.clamp(0.0, 1.0)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        quick_two_sum(p, e)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::from(-q2)));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn powu(self, mut e: u64) -> Dd {
        let (mut acc, mut base) = (Dd::from(1.0), self);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            e >>= 1;
        }
        acc
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability must lie in [0,1], got {p}")));
    }
    Ok(())
}

/// `F(k; n, p) = P[Binomial(n, p) <= k]`.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if k == n {
        return Ok(1.0);
    }
    let mut scan = CdfScan::new(n, p);
    let mut value = 0.0;
    for _ in 0..=k {
        value = scan.advance();
    }
    Ok(value)
}

/// Largest `k` with `F(k; n, epsilon) <= delta`, or `None` when even `k = 0`
/// violates the constraint. The comparison is an exact `<=` on the computed
/// value.
pub fn k_star(n: u64, budget: RiskBudget) -> Result<Option<u64>> {
    if n == 0 {
        return Err(Error::domain("calibration size must be positive"));
    }
    let mut scan = CdfScan::new(n, budget.epsilon());
    let mut best = None;
    for k in 0..n {
        if scan.advance() <= budget.delta() {
            best = Some(k);
        } else {
            break;
        }
    }
    Ok(best)
}
