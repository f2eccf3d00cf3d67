//! Sample-size estimation from a pilot sample.
//!
//! The pilot is bootstrapped exactly like a test run to obtain per-level
//! standard deviations. Their minimum (pure-shift leaks) or median (leaks
//! local to part of the distribution) over `K_sub`, rescaled by
//! `sqrt(n_pilot)`, is the asymptotic scale `sigma`. The asymptotic power
//! `P(Z > z_{1-alpha} - sqrt(n) (mu - delta) / sigma) = p` is then solved for
//! `n`.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap;
use crate::dependence;
use crate::detector::{select_k_sub, TestConfig};
use crate::ingest::{classify_data_kind, Kind, PairedSample};
use crate::quantiles::{quantiles_sorted, sort_values, QuantileLevels};
use crate::{Error, Result, Scalar};

/// Smallest pilot accepted, and the floor of every estimate.
pub const MIN_SAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SigmaVariant {
    MinOverKsub,
    MedianOverKsub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFormula {
    /// `n = (sigma (z_{1-alpha} + z_p) / (mu - delta))^2`.
    Asymptotic,
    /// `n = ((z_{1-p} / sigma - z_{1-alpha} sigma) / (mu - delta))^2`, kept
    /// for comparison with published sample sizes.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRequest<T> {
    /// Leak size the measurement campaign must detect.
    pub mu: T,
    pub delta: T,
    /// Target detection rate.
    pub power: f64,
    pub alpha: f64,
    /// Assume a pure shift, which allows the smallest per-level scale.
    pub shift: bool,
    pub formula: PowerFormula,
    pub levels: QuantileLevels,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> PowerRequest<T> {
    pub fn new(mu: T, delta: T) -> Self {
        Self {
            mu,
            delta,
            power: 0.9,
            alpha: 0.1,
            shift: false,
            formula: PowerFormula::Asymptotic,
            levels: QuantileLevels::percentiles(),
            replicates: bootstrap::DEFAULT_REPLICATES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= T::zero()) {
            return Err(Error::InvalidRequest(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.mu > self.delta) {
            return Err(Error::InvalidRequest(format!(
                "the expected leak mu ({}) must exceed delta ({})",
                self.mu, self.delta
            )));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(Error::InvalidRequest(format!(
                "power must lie in (0, 1), got {}",
                self.power
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidRequest(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The candidate scales over `K_sub`, each already multiplied by `sqrt(n_pilot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaCandidates {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerResult {
    pub n: usize,
    pub n_sub_raw: f64,
    pub sigma_hat: f64,
    pub variant: SigmaVariant,
    pub formula: PowerFormula,
    pub pilot_n: usize,
    pub m: usize,
    pub candidates: SigmaCandidates,
}

fn z(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

/// Raw sample size `n_sub` for scale `sigma` and effect `gap = mu - delta`.
pub fn raw_sample_size(sigma: f64, alpha: f64, power: f64, gap: f64, formula: PowerFormula) -> f64 {
    let numerator = match formula {
        PowerFormula::Asymptotic => sigma * (z(1.0 - alpha) + z(power)),
        PowerFormula::Literal => z(1.0 - power) / sigma - z(1.0 - alpha) * sigma,
    };
    (numerator / gap).powi(2)
}

/// `ceil(max(100, n_sub))`.
pub fn floored_sample_size(n_sub: f64) -> usize {
    n_sub.max(MIN_SAMPLE as f64).ceil() as usize
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn estimate_sample_size<T: Scalar>(pilot: &PairedSample<T>, req: &PowerRequest<T>) -> Result<PowerResult> {
    req.validate()?;
    let n = pilot.n();
    if n < MIN_SAMPLE {
        return Err(Error::PilotTooSmall { n, min: MIN_SAMPLE });
    }
    TestConfig {
        alpha: req.alpha,
        delta: req.delta,
        replicates: req.replicates,
        ..TestConfig::default()
    }
    .validate()?;

    let levels = &req.levels;
    let kind = classify_data_kind(pilot).kind;
    let qx = quantiles_sorted(&sort_values(pilot.x().values()), levels, kind);
    let qy = quantiles_sorted(&sort_values(pilot.y().values()), levels, kind);
    let gaps: Vec<T> = qx.iter().zip(&qy).map(|(&a, &b)| (a - b).abs()).collect();
    let m = dependence::estimate_pair_dependence(pilot, &Default::default()).m;
    let matrix = match kind {
        Kind::Continuous => bootstrap::block_bootstrap_continuous(pilot, levels, &gaps, req.replicates, m, req.seed)?,
        Kind::Discrete => bootstrap::block_bootstrap_discrete(pilot, levels, &gaps, req.replicates, m, req.seed)?,
    };
    let spread = bootstrap::bootstrap_variances(&matrix);
    let candidates: Vec<usize> = (0..levels.len()).filter(|&k| spread.sigma[k] > T::zero()).collect();
    let k_sub = select_k_sub(&spread.effective_variances(), &candidates);
    if k_sub.is_empty() {
        return Err(Error::DegeneratePilot(
            "no quantile level has positive bootstrap variance".into(),
        ));
    }

    let root_n = (n as f64).sqrt();
    let mut scales: Vec<f64> = k_sub.iter().map(|&k| root_n * spread.sigma[k].as_f64()).collect();
    scales.sort_by(|a, b| a.partial_cmp(b).expect("finite scales"));
    let candidates = SigmaCandidates {
        min: scales[0],
        median: median(&scales),
        max: scales[scales.len() - 1],
    };
    let (variant, sigma_hat) = if req.shift {
        (SigmaVariant::MinOverKsub, candidates.min)
    } else {
        (SigmaVariant::MedianOverKsub, candidates.median)
    };
    let gap = (req.mu - req.delta).as_f64();
    let n_sub_raw = raw_sample_size(sigma_hat, req.alpha, req.power, gap, req.formula);
    Ok(PowerResult {
        n: floored_sample_size(n_sub_raw),
        n_sub_raw,
        sigma_hat,
        variant,
        formula: req.formula,
        pilot_n: n,
        m,
        candidates,
    })
}

/// Versioned JSON document for one power analysis.
#[derive(Debug, Clone, Serialize)]
pub struct PowerReport<'a, T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub result: &'a PowerResult,
    pub request: &'a PowerRequest<T>,
}

impl PowerResult {
    pub fn report<'a, T: Scalar>(&'a self, request: &'a PowerRequest<T>) -> PowerReport<'a, T> {
        PowerReport {
            schema_version: crate::SCHEMA_VERSION,
            result: self,
            request,
        }
    }
}
