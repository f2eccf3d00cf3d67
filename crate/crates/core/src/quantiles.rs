//! Quantile estimators.
//!
//! Continuous data uses the rank statistic: the `ceil(n k)`-th order
//! statistic, or the midpoint of the `n k`-th and `(n k + 1)`-th when `n k`
//! is an integer. Discrete data uses mid-distribution quantiles, which
//! interpolate linearly between atoms at the mid-CDF values
//! `pi_j = P(X < x_j) + P(X = x_j) / 2`.
//!
//! Both estimators are also exposed in a counts-over-support form so the
//! bootstrap can evaluate resamples without sorting them.

use std::cmp::Ordering;

use serde::Serialize;

use crate::ingest::Kind;
use crate::{Error, Result, Scalar};

/// Relative tolerance for deciding that a level hits a grid point exactly.
pub const LEVEL_TOLERANCE: f64 = 1e-12;

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_TOLERANCE * a.abs().max(b.abs())
}

/// Strictly increasing quantile levels inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidLevels("at least one level is required".into()));
        }
        if let Some(&k) = levels.iter().find(|&&k| !(k > 0.0 && k < 1.0)) {
            return Err(Error::InvalidLevel(k));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLevels("levels must be strictly increasing".into()));
        }
        Ok(Self(levels))
    }

    /// 0.01, 0.02, ..., 0.99.
    pub fn percentiles() -> Self {
        Self((1..100).map(|i| i as f64 / 100.0).collect())
    }

    pub fn deciles() -> Self {
        Self((1..10).map(|i| i as f64 / 10.0).collect())
    }

    pub fn quartiles() -> Self {
        Self(vec![0.25, 0.5, 0.75])
    }

    /// Resolves a preset name, or a comma-separated list of levels.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "percentiles" => Ok(Self::percentiles()),
            "deciles" => Ok(Self::deciles()),
            "quartiles" => Ok(Self::quartiles()),
            list => {
                let levels = list
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidLevels(format!("not a number: {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new(levels)
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }
}

impl Default for QuantileLevels {
    fn default() -> Self {
        Self::percentiles()
    }
}

/// Quantile estimates, one per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileVector<T> {
    pub levels: QuantileLevels,
    pub values: Vec<T>,
}

fn check_level(k: f64) -> Result<()> {
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(k))
    }
}

/// Which order statistic(s) the rank estimator reads for a sample of size `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum OrderPosition {
    /// The `r`-th order statistic (1-indexed).
    Single(usize),
    /// The midpoint of the `r`-th and `(r + 1)`-th.
    Midpoint(usize),
}

pub(crate) fn order_position(len: usize, k: f64) -> OrderPosition {
    let nk = len as f64 * k;
    let r = nk.round();
    if approx_eq(nk, r) && r >= 1.0 && (r as usize) < len {
        OrderPosition::Midpoint(r as usize)
    } else {
        OrderPosition::Single((nk.ceil() as usize).clamp(1, len))
    }
}

fn midpoint<T: Scalar>(a: T, b: T) -> T {
    (a + b) / T::of(2.0)
}

pub(crate) fn sort_values<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut v = x.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Rank-statistic quantile of an already sorted slice.
pub fn continuous_quantile_sorted<T: Scalar>(sorted: &[T], k: f64) -> Result<T> {
    check_level(k)?;
    if sorted.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(match order_position(sorted.len(), k) {
        OrderPosition::Single(r) => sorted[r - 1],
        OrderPosition::Midpoint(r) => midpoint(sorted[r - 1], sorted[r]),
    })
}

/// Rank-statistic quantile of an unsorted series.
pub fn empirical_quantile_continuous<T: Scalar>(x: &[T], k: f64) -> Result<T> {
    check_level(k)?;
    continuous_quantile_sorted(&sort_values(x), k)
}

/// Distinct sorted values of a series together with their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct Support<T> {
    pub values: Vec<T>,
    pub counts: Vec<u32>,
}

impl<T: Scalar> Support<T> {
    pub fn from_sorted(sorted: &[T]) -> Self {
        let mut values = Vec::new();
        let mut counts: Vec<u32> = Vec::new();
        for &v in sorted {
            match values.last() {
                Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
                _ => {
                    values.push(v);
                    counts.push(1);
                }
            }
        }
        Self { values, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Mid-distribution quantiles at every level.
    pub fn mid_quantiles(&self, levels: &[f64]) -> Vec<T> {
        let mut out = vec![T::zero(); levels.len()];
        mid_quantiles_from_counts(&self.values, &self.counts, self.total(), levels, &mut out);
        out
    }
}

/// Mid-distribution quantile of a series.
pub fn mid_distribution_quantile<T: Scalar>(x: &[T], k: f64) -> Result<T> {
    check_level(k)?;
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Support::from_sorted(&sort_values(x)).mid_quantiles(&[k])[0])
}

/// Mid-distribution quantiles from counts over a sorted support. Atoms with
/// zero count are skipped. `levels` must be ascending.
pub(crate) fn mid_quantiles_from_counts<T: Scalar>(
    support: &[T],
    counts: &[u32],
    total: u64,
    levels: &[f64],
    out: &mut [T],
) {
    let denom = (2 * total) as f64;
    let atoms: Vec<(T, f64)> = {
        let mut cum = 0u64;
        support
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&v, &c)| {
                let pi = (2 * cum + c as u64) as f64 / denom;
                cum += c as u64;
                (v, pi)
            })
            .collect()
    };
    let last = atoms.len() - 1;
    let mut j = 0;
    for (slot, &k) in out.iter_mut().zip(levels) {
        // advance to the last atom whose mid-CDF is at or below k
        while j < last && (atoms[j + 1].1 < k || approx_eq(atoms[j + 1].1, k)) {
            j += 1;
        }
        let (v, pi) = atoms[j];
        *slot = if approx_eq(pi, k) || k < pi || j == last {
            // k < pi only happens below the first atom
            v
        } else {
            let (v_next, pi_next) = atoms[j + 1];
            let lambda = T::of((pi_next - k) / (pi_next - pi));
            lambda * v + (T::one() - lambda) * v_next
        };
    }
}

/// Rank-statistic quantiles from counts over a sorted support, for a sample
/// of size `total`. `levels` must be ascending.
pub(crate) fn continuous_quantiles_from_counts<T: Scalar>(
    support: &[T],
    counts: &[u32],
    total: usize,
    levels: &[f64],
    out: &mut [T],
) {
    let mut j = 0usize;
    let mut cum = counts[0] as usize;
    let mut at = |r: usize| {
        while cum < r {
            j += 1;
            cum += counts[j] as usize;
        }
        support[j]
    };
    for (slot, &k) in out.iter_mut().zip(levels) {
        *slot = match order_position(total, k) {
            OrderPosition::Single(r) => at(r),
            OrderPosition::Midpoint(r) => {
                let a = at(r);
                midpoint(a, at(r + 1))
            }
        };
    }
}

/// Quantiles of a sorted series with the estimator matching `kind`.
pub(crate) fn quantiles_sorted<T: Scalar>(sorted: &[T], levels: &QuantileLevels, kind: Kind) -> Vec<T> {
    match kind {
        Kind::Continuous => levels
            .iter()
            .map(|k| continuous_quantile_sorted(sorted, k).expect("levels are validated"))
            .collect(),
        Kind::Discrete => Support::from_sorted(sorted).mid_quantiles(levels.as_slice()),
    }
}

pub fn quantile_vector<T: Scalar>(x: &[T], levels: &QuantileLevels, kind: Kind) -> Result<QuantileVector<T>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(QuantileVector {
        levels: levels.clone(),
        values: quantiles_sorted(&sort_values(x), levels, kind),
    })
}
