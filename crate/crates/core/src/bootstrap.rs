//! Moving-block bootstrap of quantile gaps.
//!
//! Each replicate draws block starts uniformly with replacement and takes the
//! blocks at the *same* positions from both series, so the cross-dependence
//! between `x_i` and `y_i` survives resampling. Replicate `i` draws from its
//! own ChaCha stream keyed by `(seed, i)`, which makes the matrix independent
//! of thread count and scheduling.
//!
//! Resamples are never sorted. Each series is ranked once against its sorted
//! support, a replicate is accumulated as counts per support atom, and the
//! quantiles are read off the cumulative counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ingest::PairedSample;
use crate::quantiles::{continuous_quantiles_from_counts, mid_quantiles_from_counts, sort_values, QuantileLevels};
use crate::{Error, Result, Scalar};

pub const MIN_REPLICATES: usize = 100;
pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// n-out-of-n blocks, rank-statistic quantiles.
    ContinuousBlocks,
    /// m1-out-of-n blocks with `m1 = ceil(n^(2/3))`, mid-distribution quantiles.
    DiscreteSubsample,
}

/// RNG for bootstrap replicate `replicate` under `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// `count` block starts drawn uniformly with replacement from `0..=n-m`.
pub fn draw_block_starts(rng: &mut impl Rng, count: usize, n: usize, m: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..=n - m)).collect()
}

/// Smallest integer `c` with `c^3 >= n^2`, i.e. `ceil(n^(2/3))` without
/// floating point edge effects.
pub fn subsample_size(n: usize) -> usize {
    let target = (n as u128).pow(2);
    let mut c = ((n as f64).powf(2.0 / 3.0).floor() as u128).saturating_sub(1);
    while c.pow(3) < target {
        c += 1;
    }
    c as usize
}

/// Replicate statistics, one row per replicate and one column per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapMatrix<T> {
    entries: Vec<T>,
    levels: usize,
    pub regime: Regime,
    /// Block length.
    pub m: usize,
    /// Subsample size, `DiscreteSubsample` only.
    pub m1: Option<usize>,
    /// Length of the original series.
    pub n: usize,
}

impl<T: Scalar> BootstrapMatrix<T> {
    /// Builds a matrix from explicit rows; all rows must have equal length.
    pub fn from_rows(rows: Vec<Vec<T>>, regime: Regime, m: usize, m1: Option<usize>, n: usize) -> Self {
        let levels = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == levels), "ragged bootstrap rows");
        Self {
            entries: rows.into_iter().flatten().collect(),
            levels,
            regime,
            m,
            m1,
            n,
        }
    }

    /// Number of replicates `B`.
    pub fn replicates(&self) -> usize {
        self.entries.len().checked_div(self.levels).unwrap_or(0)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, replicate: usize, level: usize) -> T {
        self.entries[replicate * self.levels + level]
    }

    pub fn row(&self, replicate: usize) -> &[T] {
        &self.entries[replicate * self.levels..(replicate + 1) * self.levels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.entries.chunks(self.levels.max(1))
    }

    pub fn column(&self, level: usize) -> impl Iterator<Item = T> + '_ {
        self.entries.iter().skip(level).step_by(self.levels).copied()
    }

    /// Factor mapping raw entries onto the scale of the unscaled test
    /// statistic: 1 for `ContinuousBlocks`, `1/sqrt(n)` for
    /// `DiscreteSubsample`.
    pub fn scale(&self) -> T {
        match self.regime {
            Regime::ContinuousBlocks => T::one(),
            Regime::DiscreteSubsample => T::one() / T::of(self.n as f64).sqrt(),
        }
    }
}

/// Series ranked against its sorted distinct values.
struct Ranked<T> {
    support: Vec<T>,
    ranks: Vec<u32>,
}

impl<T: Scalar> Ranked<T> {
    fn new(values: &[T]) -> Self {
        let mut support = sort_values(values);
        support.dedup();
        let ranks = values
            .iter()
            .map(|v| {
                support
                    .binary_search_by(|s| s.partial_cmp(v).expect("values are finite"))
                    .expect("value is in its own support") as u32
            })
            .collect();
        Self { support, ranks }
    }
}

struct Engine<'a, T> {
    x: Ranked<T>,
    y: Ranked<T>,
    levels: &'a [f64],
    observed_gap: &'a [T],
    n: usize,
    m: usize,
    blocks: usize,
    regime: Regime,
    factor: T,
}

struct Scratch<T> {
    cx: Vec<u32>,
    cy: Vec<u32>,
    qx: Vec<T>,
    qy: Vec<T>,
}

impl<T: Scalar> Engine<'_, T> {
    fn scratch(&self) -> Scratch<T> {
        Scratch {
            cx: vec![0; self.x.support.len()],
            cy: vec![0; self.y.support.len()],
            qx: vec![T::zero(); self.levels.len()],
            qy: vec![T::zero(); self.levels.len()],
        }
    }

    fn replicate(&self, s: &mut Scratch<T>, seed: u64, i: usize) -> Vec<T> {
        let mut rng = replicate_rng(seed, i as u64);
        s.cx.fill(0);
        s.cy.fill(0);
        for start in draw_block_starts(&mut rng, self.blocks, self.n, self.m) {
            for t in start..start + self.m {
                s.cx[self.x.ranks[t] as usize] += 1;
                s.cy[self.y.ranks[t] as usize] += 1;
            }
        }
        let len = self.blocks * self.m;
        match self.regime {
            Regime::ContinuousBlocks => {
                continuous_quantiles_from_counts(&self.x.support, &s.cx, len, self.levels, &mut s.qx);
                continuous_quantiles_from_counts(&self.y.support, &s.cy, len, self.levels, &mut s.qy);
            }
            Regime::DiscreteSubsample => {
                mid_quantiles_from_counts(&self.x.support, &s.cx, len as u64, self.levels, &mut s.qx);
                mid_quantiles_from_counts(&self.y.support, &s.cy, len as u64, self.levels, &mut s.qy);
            }
        }
        s.qx.iter()
            .zip(&s.qy)
            .zip(self.observed_gap)
            .map(|((&a, &b), &gap)| self.factor * ((a - b).abs() - gap))
            .collect()
    }

    fn run(&self, replicates: usize, seed: u64) -> Vec<Vec<T>> {
        (0..replicates)
            .into_par_iter()
            .map_init(|| self.scratch(), |s, i| self.replicate(s, seed, i))
            .collect()
    }
}

fn validate<T: Scalar>(
    pair: &PairedSample<T>,
    levels: &QuantileLevels,
    observed_gap: &[T],
    replicates: usize,
    m: usize,
) -> Result<()> {
    if m == 0 || m > pair.n() {
        return Err(Error::InvalidBlockLength { m, n: pair.n() });
    }
    if replicates < MIN_REPLICATES {
        return Err(Error::TooFewReplicates {
            got: replicates,
            min: MIN_REPLICATES,
        });
    }
    if observed_gap.len() != levels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} observed gaps for {} levels",
            observed_gap.len(),
            levels.len()
        )));
    }
    Ok(())
}

/// Moving-block bootstrap for continuous data.
///
/// Entry `(i, k)` is `|q_k(x*) - q_k(y*)| - observed_gap[k]` where the
/// resample consists of `ceil(n/m)` blocks of length `m` (no trimming).
pub fn block_bootstrap_continuous<T: Scalar>(
    pair: &PairedSample<T>,
    levels: &QuantileLevels,
    observed_gap: &[T],
    replicates: usize,
    m: usize,
    seed: u64,
) -> Result<BootstrapMatrix<T>> {
    validate(pair, levels, observed_gap, replicates, m)?;
    let n = pair.n();
    let engine = Engine {
        x: Ranked::new(pair.x().values()),
        y: Ranked::new(pair.y().values()),
        levels: levels.as_slice(),
        observed_gap,
        n,
        m,
        blocks: n.div_ceil(m),
        regime: Regime::ContinuousBlocks,
        factor: T::one(),
    };
    let rows = engine.run(replicates, seed);
    Ok(BootstrapMatrix::from_rows(rows, Regime::ContinuousBlocks, m, None, n))
}

/// m-out-of-n block bootstrap for discrete data.
///
/// `m1 = ceil(n^(2/3))`; each replicate takes `ceil(m1/m)` blocks and entry
/// `(i, k)` is `sqrt(m1) (|q_k(x*) - q_k(y*)| - observed_gap[k])` with
/// mid-distribution quantiles throughout.
pub fn block_bootstrap_discrete<T: Scalar>(
    pair: &PairedSample<T>,
    levels: &QuantileLevels,
    observed_gap: &[T],
    replicates: usize,
    m: usize,
    seed: u64,
) -> Result<BootstrapMatrix<T>> {
    validate(pair, levels, observed_gap, replicates, m)?;
    let n = pair.n();
    let m1 = subsample_size(n);
    let engine = Engine {
        x: Ranked::new(pair.x().values()),
        y: Ranked::new(pair.y().values()),
        levels: levels.as_slice(),
        observed_gap,
        n,
        m,
        blocks: m1.div_ceil(m),
        regime: Regime::DiscreteSubsample,
        factor: T::of(m1 as f64).sqrt(),
    };
    let rows = engine.run(replicates, seed);
    Ok(BootstrapMatrix::from_rows(
        rows,
        Regime::DiscreteSubsample,
        m,
        Some(m1),
        n,
    ))
}

/// Per-level spread of the replicate statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceVector<T> {
    /// Column means.
    pub means: Vec<T>,
    /// Unbiased column variances (divisor `B - 1`) of the raw entries.
    pub variances: Vec<T>,
    /// Standard deviation on the scale of the test statistic: the column
    /// standard deviation times [`BootstrapMatrix::scale`].
    pub sigma: Vec<T>,
}

impl<T: Scalar> VarianceVector<T> {
    /// Squared effective standard deviations.
    pub fn effective_variances(&self) -> Vec<T> {
        self.sigma.iter().map(|&s| s * s).collect()
    }
}

pub fn bootstrap_variances<T: Scalar>(matrix: &BootstrapMatrix<T>) -> VarianceVector<T> {
    let b = matrix.replicates();
    assert!(b >= 2, "variance needs at least two replicates");
    let bf = T::of(b as f64);
    let scale = matrix.scale();
    let mut means = Vec::with_capacity(matrix.levels());
    let mut variances = Vec::with_capacity(matrix.levels());
    let mut sigma = Vec::with_capacity(matrix.levels());
    for k in 0..matrix.levels() {
        let mean = matrix.column(k).sum::<T>() / bf;
        let ss: T = matrix.column(k).map(|v| (v - mean) * (v - mean)).sum();
        let var = ss / T::of((b - 1) as f64);
        means.push(mean);
        variances.push(var);
        sigma.push(var.sqrt() * scale);
    }
    VarianceVector {
        means,
        variances,
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantiles::empirical_quantile_continuous;
    use rand_distr::{Bernoulli, Distribution, StandardNormal};

    fn normal_pair(n: usize, shift: f64, seed: u64) -> PairedSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        PairedSample::from_values(x, y).unwrap()
    }

    fn gaps(pair: &PairedSample<f64>, levels: &QuantileLevels) -> Vec<f64> {
        levels
            .iter()
            .map(|k| {
                (empirical_quantile_continuous(pair.x().values(), k).unwrap()
                    - empirical_quantile_continuous(pair.y().values(), k).unwrap())
                .abs()
            })
            .collect()
    }

    #[test]
    fn block_arithmetic() {
        assert_eq!(10usize.div_ceil(3), 4);
        let mut rng = replicate_rng(1, 0);
        let starts = draw_block_starts(&mut rng, 4, 10, 3);
        assert_eq!(starts.len(), 4);
        assert!(starts.iter().all(|&s| s <= 7));
        assert_eq!(subsample_size(1000), 100);
        assert_eq!(subsample_size(400), 55);
        assert_eq!(subsample_size(8), 4);
        assert_eq!(1000usize.div_ceil(5).min(subsample_size(1000).div_ceil(5)), 20);
    }

    #[test]
    fn identical_series_give_zero_matrix() {
        let p = normal_pair(300, 0.0, 1);
        let same = PairedSample::from_values(p.x().values().to_vec(), p.x().values().to_vec()).unwrap();
        let levels = QuantileLevels::deciles();
        let zero = vec![0.0; levels.len()];
        for mtx in [
            block_bootstrap_continuous(&same, &levels, &zero, 100, 4, 9).unwrap(),
            block_bootstrap_discrete(&same, &levels, &zero, 100, 4, 9).unwrap(),
        ] {
            assert!(mtx.rows().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = normal_pair(10, 0.0, 1);
        let levels = QuantileLevels::quartiles();
        let g = vec![0.0; 3];
        assert!(matches!(
            block_bootstrap_continuous(&p, &levels, &g, 100, 11, 0),
            Err(Error::InvalidBlockLength { m: 11, n: 10 })
        ));
        assert!(matches!(
            block_bootstrap_discrete(&p, &levels, &g, 100, 0, 0),
            Err(Error::InvalidBlockLength { .. })
        ));
        assert!(matches!(
            block_bootstrap_continuous(&p, &levels, &g, 99, 1, 0),
            Err(Error::TooFewReplicates { .. })
        ));
    }

    #[test]
    fn variance_examples() {
        let mtx = BootstrapMatrix::from_rows(
            vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]],
            Regime::ContinuousBlocks,
            1,
            None,
            3,
        );
        let v = bootstrap_variances(&mtx);
        assert_eq!(v.variances, vec![1.0, 0.0]);
        assert_eq!(v.means, vec![2.0, 5.0]);
        assert_eq!(v.sigma, vec![1.0, 0.0]);

        // column sd 2.0 at n = 400: effective sigma 2 / 20
        let r = 2.0_f64;
        let mtx = BootstrapMatrix::from_rows(
            vec![vec![r], vec![-r], vec![0.0]],
            Regime::DiscreteSubsample,
            1,
            Some(55),
            400,
        );
        let v = bootstrap_variances(&mtx);
        assert!((v.variances[0] - 4.0).abs() < 1e-12);
        assert!((v.sigma[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let p = normal_pair(500, 0.3, 5);
        let levels = QuantileLevels::percentiles();
        let g = gaps(&p, &levels);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| block_bootstrap_continuous(&p, &levels, &g, 200, 7, 42).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a, run(1));
    }

    #[test]
    fn swap_gives_identical_matrix() {
        let p = normal_pair(400, 0.5, 6);
        let levels = QuantileLevels::deciles();
        let g = gaps(&p, &levels);
        let a = block_bootstrap_continuous(&p, &levels, &g, 100, 3, 1).unwrap();
        let b = block_bootstrap_continuous(&p.swapped(), &levels, &g, 100, 3, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scale_equivariance_of_entries() {
        let p = normal_pair(400, 0.5, 7);
        let levels = QuantileLevels::deciles();
        let g = gaps(&p, &levels);
        let a = block_bootstrap_continuous(&p, &levels, &g, 100, 3, 1).unwrap();
        let scaled = p.map(|v| v * 4.0).unwrap();
        let g4: Vec<f64> = g.iter().map(|v| v * 4.0).collect();
        let b = block_bootstrap_continuous(&scaled, &levels, &g4, 100, 3, 1).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            for (&va, &vb) in ra.iter().zip(rb) {
                assert_eq!(va * 4.0, vb);
            }
        }
    }

    #[test]
    fn exchangeable_columns_center_at_zero() {
        let p = normal_pair(2000, 0.0, 8);
        let levels = QuantileLevels::quartiles();
        let g = gaps(&p, &levels);
        let b = 2000;
        let mtx = block_bootstrap_continuous(&p, &levels, &g, b, 1, 3).unwrap();
        let v = bootstrap_variances(&mtx);
        for k in 0..levels.len() {
            // |d*| - |d| is biased upward by up to one sd when |d| is near zero
            let se = v.variances[k].sqrt() / (b as f64).sqrt();
            assert!(v.means[k].abs() < 3.0 * se + v.variances[k].sqrt(), "level {k}");
        }
    }

    #[test]
    fn discrete_bootstrap_centers_at_observed_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bern = Bernoulli::new(0.5).unwrap();
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| bern.sample(&mut rng) as u8 as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| 1.0 + bern.sample(&mut rng) as u8 as f64).collect();
        let p = PairedSample::from_values(x, y).unwrap();
        let levels = QuantileLevels::new(vec![0.5]).unwrap();
        let qx = crate::quantiles::mid_distribution_quantile(p.x().values(), 0.5).unwrap();
        let qy = crate::quantiles::mid_distribution_quantile(p.y().values(), 0.5).unwrap();
        let b = 1000;
        let mtx = block_bootstrap_discrete(&p, &levels, &[(qx - qy).abs()], b, 1, 4).unwrap();
        let v = bootstrap_variances(&mtx);
        let se = v.variances[0].sqrt() / (b as f64).sqrt();
        assert!(v.means[0].abs() <= 3.0 * se, "mean {} se {}", v.means[0], se);
    }
}
