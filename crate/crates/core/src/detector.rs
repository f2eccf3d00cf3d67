//! Relevant-difference test on quantile gaps.
//!
//! Null hypothesis: every gap `|q_k(X) - q_k(Y)|` over the levels `K` is at
//! most `delta`. The statistic is the largest standardized excess
//! `(|q_k(x) - q_k(y)| - delta) / sigma_k` over a filtered level set, and the
//! critical value is an order statistic of the bootstrap maxima over the same
//! set.
//!
//! The two filters:
//!
//! - `K_sub` keeps levels whose bootstrap variance is below five times the
//!   mean variance.
//! - `K_sub_max` keeps the levels of `K_sub` whose gap could plausibly exceed
//!   `delta`, i.e. `|d_k| / sigma_k + 30 sqrt(ln(n)^1.5 / n) >= delta / sigma_k`.
//!
//! Levels with zero bootstrap variance are resolved before filtering: a gap
//! above `delta` there is a certain violation, anything else is dropped.

use serde::{Serialize, Serializer};

use crate::bootstrap::{self, BootstrapMatrix, Regime, MIN_REPLICATES};
use crate::dependence::{self, BlockLengthConfig, DependenceEstimate};
use crate::ingest::{classify_data_kind, DataKind, Kind, PairedSample};
use crate::quantiles::{quantiles_sorted, sort_values, QuantileLevels};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Violation,
    NoViolation,
}

impl Decision {
    pub fn is_violation(self) -> bool {
        self == Decision::Violation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestConfig<T> {
    /// Type-1 error rate.
    pub alpha: f64,
    /// Negligibility threshold, in measurement units.
    pub delta: T,
    pub levels: QuantileLevels,
    /// Bootstrap replicates `B`.
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    /// Skip automatic classification.
    pub kind_override: Option<Kind>,
    /// Skip block-length estimation.
    pub block_length: Option<usize>,
    pub dependence: BlockLengthConfig,
}

impl<T: Scalar> Default for TestConfig<T> {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            delta: T::zero(),
            levels: QuantileLevels::percentiles(),
            replicates: bootstrap::DEFAULT_REPLICATES,
            seed: 0,
            kind_override: None,
            block_length: None,
            dependence: BlockLengthConfig::default(),
        }
    }
}

impl<T: Scalar> TestConfig<T> {
    pub fn with_delta(delta: T) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.delta >= T::zero()) || !self.delta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::TooFewReplicates {
                got: self.replicates,
                min: MIN_REPLICATES,
            });
        }
        if self.block_length == Some(0) {
            return Err(Error::InvalidConfig("block length must be positive".into()));
        }
        Ok(())
    }
}

/// Per-level quantities behind a decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDiagnostics<T> {
    pub k: f64,
    pub qx: T,
    pub qy: T,
    pub diff: T,
    pub sigma: T,
    pub in_k_sub: bool,
    pub in_k_sub_max: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterDiagnostics<T> {
    pub k_sub: Vec<f64>,
    pub k_sub_max: Vec<f64>,
    pub levels: Vec<LevelDiagnostics<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TestResult<T> {
    pub decision: Decision,
    /// `-inf` when no level is active, `+inf` when a zero-variance level
    /// carries a gap above `delta`.
    #[serde(serialize_with = "serialize_extended")]
    pub statistic: T,
    /// Bootstrap critical value; absent when no level is active.
    pub threshold: Option<T>,
    pub n: usize,
    pub dependence: DependenceEstimate,
    pub kind: DataKind,
    pub regime: Option<Regime>,
    pub diagnostics: FilterDiagnostics<T>,
    /// Violation forced by a zero-variance level with a gap above `delta`.
    pub forced_by_zero_variance: bool,
    /// Both series constant and equal; no bootstrap was run.
    pub degenerate: bool,
    pub config: TestConfig<T>,
}

/// Writes non-finite values as the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn serialize_extended<T: Scalar, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        v.serialize(s)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > T::zero() {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Levels (indices into `variances`) among `candidates` whose variance is
/// below five times the candidates' mean variance.
pub fn select_k_sub<T: Scalar>(variances: &[T], candidates: &[usize]) -> Vec<usize> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let mean = candidates.iter().map(|&k| variances[k]).sum::<T>() / T::of(candidates.len() as f64);
    let bound = T::of(5.0) * mean;
    candidates.iter().copied().filter(|&k| variances[k] < bound).collect()
}

/// `30 sqrt(ln(n)^1.5 / n)`.
pub fn relevance_slack(n: usize) -> f64 {
    let n = n as f64;
    30.0 * (n.ln().powf(1.5) / n).sqrt()
}

/// Levels of `k_sub` whose gap may exceed `delta` once the slack is allowed.
pub fn select_k_sub_max<T: Scalar>(gaps: &[T], sigma: &[T], delta: T, n: usize, k_sub: &[usize]) -> Vec<usize> {
    let slack = T::of(relevance_slack(n));
    k_sub
        .iter()
        .copied()
        .filter(|&k| gaps[k] / sigma[k] + slack >= delta / sigma[k])
        .collect()
}

/// Largest standardized excess over `active`; `-inf` when `active` is empty.
pub fn test_statistic<T: Scalar>(gaps: &[T], sigma: &[T], delta: T, active: &[usize]) -> T {
    active
        .iter()
        .map(|&k| (gaps[k] - delta) / sigma[k])
        .fold(T::neg_infinity(), T::max)
}

/// The `floor((1 - alpha) B)`-th smallest value (1-indexed, ties kept).
pub fn order_statistic_threshold<T: Scalar>(mut values: Vec<T>, alpha: f64) -> T {
    let b = values.len();
    assert!(b > 0, "no bootstrap values");
    // the epsilon absorbs representation error in (1 - alpha), e.g. 0.7 * 10
    let index = (((1.0 - alpha) * b as f64 + 1e-9).floor() as usize).clamp(1, b);
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("bootstrap values are finite"));
    values[index - 1]
}

/// Critical value from the per-replicate maxima of the standardized entries
/// over `active`.
pub fn bootstrap_threshold<T: Scalar>(
    matrix: &BootstrapMatrix<T>,
    sigma: &[T],
    active: &[usize],
    alpha: f64,
) -> Result<T> {
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let scale = matrix.scale();
    let maxima: Vec<T> = matrix
        .rows()
        .map(|row| {
            active
                .iter()
                .map(|&k| row[k] * scale / sigma[k])
                .fold(T::neg_infinity(), T::max)
        })
        .collect();
    Ok(order_statistic_threshold(maxima, alpha))
}

fn is_constant<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Runs the full test on a pair.
pub fn run_test<T: Scalar>(pair: &PairedSample<T>, config: &TestConfig<T>) -> Result<TestResult<T>> {
    config.validate()?;
    let n = pair.n();
    let levels = &config.levels;
    let classified = classify_data_kind(pair);
    let kind = DataKind {
        kind: config.kind_override.unwrap_or(classified.kind),
        ..classified
    };

    let qx = quantiles_sorted(&sort_values(pair.x().values()), levels, kind.kind);
    let qy = quantiles_sorted(&sort_values(pair.y().values()), levels, kind.kind);
    let gaps: Vec<T> = qx.iter().zip(&qy).map(|(&a, &b)| (a - b).abs()).collect();

    let xs = pair.x().values();
    let ys = pair.y().values();
    if is_constant(xs) && is_constant(ys) && xs[0] == ys[0] {
        let diagnostics = FilterDiagnostics {
            k_sub: Vec::new(),
            k_sub_max: Vec::new(),
            levels: level_rows(levels, &qx, &qy, &gaps, &vec![T::zero(); levels.len()], &[], &[]),
        };
        return Ok(TestResult {
            decision: Decision::NoViolation,
            statistic: T::neg_infinity(),
            threshold: None,
            n,
            dependence: DependenceEstimate {
                m: 1,
                per_series: (1.0, 1.0),
                degenerate: (true, true),
            },
            kind,
            regime: None,
            diagnostics,
            forced_by_zero_variance: false,
            degenerate: true,
            config: config.clone(),
        });
    }

    let dependence = match config.block_length {
        Some(m) => DependenceEstimate {
            m: m.min(n),
            per_series: (m as f64, m as f64),
            degenerate: (false, false),
        },
        None => dependence::estimate_pair_dependence(pair, &config.dependence),
    };
    let matrix = match kind.kind {
        Kind::Continuous => {
            bootstrap::block_bootstrap_continuous(pair, levels, &gaps, config.replicates, dependence.m, config.seed)?
        }
        Kind::Discrete => {
            bootstrap::block_bootstrap_discrete(pair, levels, &gaps, config.replicates, dependence.m, config.seed)?
        }
    };
    let spread = bootstrap::bootstrap_variances(&matrix);
    let sigma = &spread.sigma;

    let delta = config.delta;
    let (candidates, zero): (Vec<usize>, Vec<usize>) = (0..levels.len()).partition(|&k| sigma[k] > T::zero());
    let forced = zero.iter().any(|&k| gaps[k] > delta);

    let k_sub = select_k_sub(&spread.effective_variances(), &candidates);
    let k_sub_max = select_k_sub_max(&gaps, sigma, delta, n, &k_sub);
    let threshold = if k_sub_max.is_empty() {
        None
    } else {
        Some(bootstrap_threshold(&matrix, sigma, &k_sub_max, config.alpha)?)
    };
    let statistic = if forced {
        T::infinity()
    } else {
        test_statistic(&gaps, sigma, delta, &k_sub_max)
    };
    let decision = match threshold {
        _ if forced => Decision::Violation,
        Some(c) if statistic > c => Decision::Violation,
        _ => Decision::NoViolation,
    };

    let diagnostics = FilterDiagnostics {
        k_sub: k_sub.iter().map(|&k| levels.as_slice()[k]).collect(),
        k_sub_max: k_sub_max.iter().map(|&k| levels.as_slice()[k]).collect(),
        levels: level_rows(levels, &qx, &qy, &gaps, sigma, &k_sub, &k_sub_max),
    };
    Ok(TestResult {
        decision,
        statistic,
        threshold,
        n,
        dependence,
        kind,
        regime: Some(matrix.regime),
        diagnostics,
        forced_by_zero_variance: forced,
        degenerate: false,
        config: config.clone(),
    })
}

fn level_rows<T: Scalar>(
    levels: &QuantileLevels,
    qx: &[T],
    qy: &[T],
    gaps: &[T],
    sigma: &[T],
    k_sub: &[usize],
    k_sub_max: &[usize],
) -> Vec<LevelDiagnostics<T>> {
    levels
        .iter()
        .enumerate()
        .map(|(i, k)| LevelDiagnostics {
            k,
            qx: qx[i],
            qy: qy[i],
            diff: gaps[i],
            sigma: sigma[i],
            in_k_sub: k_sub.contains(&i),
            in_k_sub_max: k_sub_max.contains(&i),
        })
        .collect()
}

/// Versioned JSON document for one analysis.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct AnalysisReport<'a, T> {
    pub schema_version: u32,
    pub decision: Decision,
    #[serde(serialize_with = "serialize_extended")]
    pub statistic: T,
    pub threshold: Option<T>,
    pub alpha: f64,
    pub delta: T,
    pub n: usize,
    pub m: usize,
    pub m_x: f64,
    pub m_y: f64,
    pub kind: Kind,
    pub distinct_count: usize,
    pub regime: Option<Regime>,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub forced_by_zero_variance: bool,
    pub degenerate: bool,
    pub levels: &'a [LevelDiagnostics<T>],
    pub config: &'a TestConfig<T>,
}

impl<T: Scalar> TestResult<T> {
    pub fn report(&self) -> AnalysisReport<'_, T> {
        AnalysisReport {
            schema_version: crate::SCHEMA_VERSION,
            decision: self.decision,
            statistic: self.statistic,
            threshold: self.threshold,
            alpha: self.config.alpha,
            delta: self.config.delta,
            n: self.n,
            m: self.dependence.m,
            m_x: self.dependence.per_series.0,
            m_y: self.dependence.per_series.1,
            kind: self.kind.kind,
            distinct_count: self.kind.distinct_count,
            regime: self.regime,
            replicates: self.config.replicates,
            seed: self.config.seed,
            forced_by_zero_variance: self.forced_by_zero_variance,
            degenerate: self.degenerate,
            levels: &self.diagnostics.levels,
            config: &self.config,
        }
    }
}
