use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_factorial;

use super::{Result, StatsError};

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_ci(k: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if k > n {
        return Err(StatsError::Precondition(format!("k = {k} exceeds n = {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Precondition(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if phat == 1.0 { 1.0 } else { (centre + half).min(1.0) };
    Ok((lower, upper))
}

/// 2x2 table: rows are groups, columns are (successes, failures).
///
/// ```text
///            success  failure
///   group 1     a        b
///   group 2     c        d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl CountTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    /// Builds the table from per-group `(successes, trials)`.
    pub fn from_rates(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<Self> {
        if k1 > n1 || k2 > n2 {
            return Err(StatsError::Precondition("successes exceed trials".into()));
        }
        Ok(Self::new(k1, n1 - k1, k2, n2 - k2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OddsRatio {
    Finite(f64),
    /// `b * c = 0` with `a * d > 0`.
    Infinite,
    /// `a * d = b * c = 0`.
    Undefined,
}

impl OddsRatio {
    pub fn value(self) -> Result<f64> {
        match self {
            OddsRatio::Finite(v) => Ok(v),
            OddsRatio::Infinite => Ok(f64::INFINITY),
            OddsRatio::Undefined => Err(StatsError::UndefinedOddsRatio),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    pub p_value: f64,
    pub odds_ratio: OddsRatio,
}

/// Two-sided Fisher exact test: sums the hypergeometric probabilities of all
/// tables with the observed margins that are no more likely than the observed one.
pub fn fisher_exact_two_sided(t: CountTable2x2) -> FisherResult {
    let CountTable2x2 { a, b, c, d } = t;
    let row1 = a + b;
    let col1 = a + c;
    let n = a + b + c + d;
    let ln_p = |x: u64| -> f64 {
        // hypergeometric mass for top-left cell = x
        let (xb, xc) = (row1 - x, col1 - x);
        let xd = n + x - row1 - col1;
        ln_factorial(row1) + ln_factorial(n - row1) + ln_factorial(col1) + ln_factorial(n - col1)
            - ln_factorial(n)
            - ln_factorial(x)
            - ln_factorial(xb)
            - ln_factorial(xc)
            - ln_factorial(xd)
    };
    let lo = (row1 + col1).saturating_sub(n);
    let hi = row1.min(col1);
    let observed = ln_p(a);
    let tol = 1e-7;
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|lp| *lp <= observed + tol)
        .map(f64::exp)
        .sum();
    let (ad, bc) = (a * d, b * c);
    let odds_ratio = match (ad, bc) {
        (0, 0) => OddsRatio::Undefined,
        (_, 0) => OddsRatio::Infinite,
        _ => OddsRatio::Finite(ad as f64 / bc as f64),
    };
    FisherResult { p_value: p.min(1.0), odds_ratio }
}
