//! Automatic block-length selection.
//!
//! Politis–White plug-in rule with the Patton–Politis–White correction, for
//! the circular block bootstrap: the sample autocorrelations pick a bandwidth
//! `M` from the first run of insignificant lags, and flat-top weighted
//! autocovariances estimate the optimal block length
//! `b = (2 G^2 / D)^(1/3) n^(1/3)`.

use serde::Serialize;

use crate::ingest::{MeasurementSeries, PairedSample};
use crate::Scalar;

/// Tuning constants. `None` fields are derived from the series length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockLengthConfig {
    /// Autocorrelations inside `±c sqrt(log10(n) / n)` are insignificant.
    pub band_constant: f64,
    /// Number of consecutive insignificant lags that ends the dependence.
    /// Default `max(5, ceil(sqrt(log10 n)))`.
    pub run_length: Option<usize>,
    /// Largest autocorrelation lag inspected. Default `ceil(sqrt n) + run_length`.
    pub max_lag: Option<usize>,
    /// Upper clip for the block length. Default `3 ceil(n^(1/3))`.
    pub max_block: Option<f64>,
    /// Series shorter than this get block length 1.
    pub min_len: usize,
}

impl Default for BlockLengthConfig {
    fn default() -> Self {
        Self {
            band_constant: 2.0,
            run_length: None,
            max_lag: None,
            max_block: None,
            min_len: 32,
        }
    }
}

/// Raw block-length estimate for one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockLength {
    pub value: f64,
    /// Set when the series has zero variance; `value` is then 1.
    pub degenerate: bool,
}

/// Flat-top (trapezoidal) lag window.
fn flat_top(s: f64) -> f64 {
    let s = s.abs();
    if s < 0.5 {
        1.0
    } else if s <= 1.0 {
        2.0 * (1.0 - s)
    } else {
        0.0
    }
}

/// Autocovariances `gamma(0..=max_lag)` with divisor `n`.
fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag.min(n - 1))
        .map(|h| {
            centered[..n - h]
                .iter()
                .zip(&centered[h..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

pub fn estimate_block_length<T: Scalar>(x: &MeasurementSeries<T>, config: &BlockLengthConfig) -> BlockLength {
    let values: Vec<f64> = x.values().iter().map(|v| v.as_f64()).collect();
    block_length_of(&values, config)
}

pub(crate) fn block_length_of(x: &[f64], config: &BlockLengthConfig) -> BlockLength {
    let n = x.len();
    let trivial = BlockLength {
        value: 1.0,
        degenerate: false,
    };
    if n < config.min_len.max(2) {
        return trivial;
    }
    let nf = n as f64;
    let log_n = nf.log10();
    let run = config
        .run_length
        .unwrap_or_else(|| 5.max(log_n.sqrt().ceil() as usize))
        .max(1);
    let max_lag = config
        .max_lag
        .unwrap_or_else(|| nf.sqrt().ceil() as usize + run)
        .clamp(1, n - 1);
    let max_block = config.max_block.unwrap_or_else(|| 3.0 * nf.cbrt().ceil()).max(1.0);

    let gamma = autocovariances(x, max_lag);
    if !(gamma[0] > 0.0) {
        return BlockLength {
            value: 1.0,
            degenerate: true,
        };
    }
    let band = config.band_constant * (log_n / nf).sqrt();
    let significant: Vec<bool> = gamma[1..].iter().map(|g| (g / gamma[0]).abs() >= band).collect();

    // smallest lag after which `run` consecutive lags are insignificant
    let lags = significant.len();
    let cutoff = (0..lags.saturating_sub(run - 1))
        .find(|&start| significant[start..start + run].iter().all(|s| !s))
        .or_else(|| significant.iter().rposition(|&s| s).map(|i| i + 1))
        .unwrap_or(0);
    let bandwidth = (2 * cutoff).min(max_lag);
    if bandwidth == 0 {
        return trivial;
    }

    let mut g = 0.0;
    let mut spectral = gamma[0];
    for (h, &gh) in gamma.iter().enumerate().take(bandwidth + 1).skip(1) {
        let w = flat_top(h as f64 / bandwidth as f64);
        g += 2.0 * w * h as f64 * gh;
        spectral += 2.0 * w * gh;
    }
    let d = 4.0 / 3.0 * spectral * spectral;
    if !(d > 0.0) {
        return trivial;
    }
    let b = (2.0 * g * g / d).cbrt() * nf.cbrt();
    BlockLength {
        value: b.clamp(1.0, max_block),
        degenerate: false,
    }
}

/// Block length shared by both series of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependenceEstimate {
    pub m: usize,
    /// Raw per-series estimates `(m_x, m_y)`.
    pub per_series: (f64, f64),
    pub degenerate: (bool, bool),
}

/// `m = min(ceil(max(m_x, m_y)), floor(n / 2))`, at least 1.
pub fn combine_block_lengths(m_x: f64, m_y: f64, n: usize) -> usize {
    let raw = m_x.max(m_y).ceil().max(1.0) as usize;
    raw.min(n / 2).max(1)
}

pub fn estimate_pair_dependence<T: Scalar>(pair: &PairedSample<T>, config: &BlockLengthConfig) -> DependenceEstimate {
    let bx = estimate_block_length(pair.x(), config);
    let by = estimate_block_length(pair.y(), config);
    DependenceEstimate {
        m: combine_block_lengths(bx.value, by.value, pair.n()),
        per_series: (bx.value, by.value),
        degenerate: (bx.degenerate, by.degenerate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Unit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = 0.0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n + 500 {
            let e: f64 = StandardNormal.sample(&mut rng);
            y = phi * y + e;
            if i >= 500 {
                out.push(y);
            }
        }
        out
    }

    fn ma(q: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..n + q).map(|_| StandardNormal.sample(&mut rng)).collect();
        e.windows(q + 1).map(|w| w.iter().sum()).collect()
    }

    fn est(x: &[f64]) -> f64 {
        block_length_of(x, &BlockLengthConfig::default()).value
    }

    #[test]
    fn white_noise_gives_short_blocks() {
        let small = (0..200).filter(|&s| est(&ar1(0.0, 10_000, s)) <= 4.0).count();
        assert!(small >= 190, "{small}/200");
    }

    #[test]
    fn strong_dependence_gives_longer_blocks() {
        let longer = (0..200)
            .filter(|&s| est(&ar1(0.9, 10_000, s)) > est(&ar1(0.0, 10_000, 10_000 + s)))
            .count();
        assert!(longer >= 190, "{longer}/200");
    }

    #[test]
    fn constant_series_is_degenerate() {
        let b = block_length_of(&[3.0; 100], &BlockLengthConfig::default());
        assert_eq!(
            b,
            BlockLength {
                value: 1.0,
                degenerate: true
            }
        );
    }

    #[test]
    fn short_series_short_circuit() {
        let b = block_length_of(&ar1(0.9, 31, 1), &BlockLengthConfig::default());
        assert_eq!(b.value, 1.0);
    }

    #[test]
    fn combination_rule() {
        assert_eq!(combine_block_lengths(2.3, 5.1, 1000), 6);
        assert_eq!(combine_block_lengths(700.0, 1.0, 1000), 500);
        assert_eq!(combine_block_lengths(1.0, 1.0, 3), 1);
        assert_eq!(combine_block_lengths(9.0, 1.0, 1), 1);
    }

    #[test]
    fn invariant_under_affine_maps() {
        let x = ar1(0.6, 2_000, 4);
        let base = est(&x);
        let shifted: Vec<f64> = x.iter().map(|v| v + 1e4).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * 37.5).collect();
        assert!((est(&shifted) - base).abs() < 1e-6 * base);
        assert!((est(&scaled) - base).abs() < 1e-6 * base);
    }

    #[test]
    fn ma_order_orders_median_estimate() {
        let median = |q: usize| {
            let mut v: Vec<f64> = (0..41).map(|s| est(&ma(q, 10_000, 100 * q as u64 + s))).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[20]
        };
        let meds: Vec<f64> = [0, 2, 5, 10, 20].into_iter().map(median).collect();
        assert!(meds.windows(2).all(|w| w[0] <= w[1]), "{meds:?}");
    }

    #[test]
    fn pair_estimate_respects_bounds() {
        let x = MeasurementSeries::new(ar1(0.95, 64, 3), "x", Unit::Ns).unwrap();
        let y = MeasurementSeries::new(ar1(0.0, 64, 4), "y", Unit::Ns).unwrap();
        let p = crate::ingest::pair(x, y, false).unwrap();
        let d = estimate_pair_dependence(&p, &BlockLengthConfig::default());
        assert!(d.m >= 1 && d.m <= 32);
        assert_eq!(d.m, combine_block_lengths(d.per_series.0, d.per_series.1, 64));
    }
}
