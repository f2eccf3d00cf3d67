//! AR(1) ground truth and Monte Carlo rejection-rate grids.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::detector::{run_test, TestConfig};
use crate::ingest::{pair, MeasurementSeries, PairedSample, Unit};
use crate::quantiles::QuantileLevels;
use crate::{Error, Result};

pub const MIN_REPS: usize = 50;

/// Two independent AR(1) paths `Y_t = phi Y_{t-1} + e_t`, `e_t ~ N(0, sigma^2)`,
/// with `y` shifted by `mu_shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar1Spec {
    pub phi: f64,
    pub sigma: f64,
    pub mu_shift: f64,
    pub n: usize,
    /// Steps discarded after starting from `Y_0 = 0`.
    pub burn_in: usize,
    pub seed: u64,
}

impl Ar1Spec {
    pub fn new(phi: f64, mu_shift: f64, n: usize, seed: u64) -> Self {
        Self {
            phi,
            sigma: 1.0,
            mu_shift,
            n,
            burn_in: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidSpec(format!("|phi| must be < 1, got {}", self.phi)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.mu_shift.is_finite() {
            return Err(Error::InvalidSpec("mu_shift must be finite".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        Ok(())
    }
}

fn ar1_path(rng: &mut ChaCha8Rng, spec: &Ar1Spec, shift: f64) -> Vec<f64> {
    let mut level = 0.0;
    let mut out = Vec::with_capacity(spec.n);
    for t in 0..spec.burn_in + spec.n {
        let e: f64 = StandardNormal.sample(rng);
        level = spec.phi * level + spec.sigma * e;
        if t >= spec.burn_in {
            out.push(level + shift);
        }
    }
    out
}

/// Generates the pair; `x` and `y` come from streams 0 and 1 of the seed.
pub fn gen_ar1(spec: &Ar1Spec) -> Result<PairedSample<f64>> {
    spec.validate()?;
    let mut rx = ChaCha8Rng::seed_from_u64(spec.seed);
    rx.set_stream(0);
    let mut ry = ChaCha8Rng::seed_from_u64(spec.seed);
    ry.set_stream(1);
    let x = ar1_path(&mut rx, spec, 0.0);
    let y = ar1_path(&mut ry, spec, spec.mu_shift);
    pair(
        MeasurementSeries::new(x, "x", Unit::Unitless)?,
        MeasurementSeries::new(y, "y", Unit::Unitless)?,
        false,
    )
}

/// Mixes `(seed, a, b)` into an independent 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    mix(mix(mix(seed) ^ a) ^ b.rotate_left(32))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub phis: Vec<f64>,
    pub mus: Vec<f64>,
    pub n: usize,
    pub delta: f64,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub reps: usize,
    pub seed: u64,
    pub sigma: f64,
    pub burn_in: usize,
    pub levels: QuantileLevels,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            phis: vec![0.0],
            mus: vec![0.0],
            n: 1000,
            delta: 0.5,
            alpha: 0.1,
            replicates: crate::bootstrap::DEFAULT_REPLICATES,
            reps: 200,
            seed: 0,
            sigma: 1.0,
            burn_in: 1000,
            levels: QuantileLevels::percentiles(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phis.is_empty() || self.mus.is_empty() {
            return Err(Error::InvalidSpec("grid needs at least one phi and one mu".into()));
        }
        if self.reps < MIN_REPS {
            return Err(Error::InvalidSpec(format!(
                "reps must be >= {MIN_REPS}, got {}",
                self.reps
            )));
        }
        for &phi in &self.phis {
            self.cell_spec(phi, 0.0, 0).validate()?;
        }
        self.config(0).validate()
    }

    fn cell_spec(&self, phi: f64, mu: f64, seed: u64) -> Ar1Spec {
        Ar1Spec {
            phi,
            sigma: self.sigma,
            mu_shift: mu,
            n: self.n,
            burn_in: self.burn_in,
            seed,
        }
    }

    fn config(&self, seed: u64) -> TestConfig<f64> {
        TestConfig {
            alpha: self.alpha,
            delta: self.delta,
            levels: self.levels.clone(),
            replicates: self.replicates,
            seed,
            ..TestConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub phi: f64,
    pub mu: f64,
    pub n: usize,
    pub delta: f64,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    pub reject_rate: f64,
    /// Binomial standard error of `reject_rate`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionSurface {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub cells: Vec<CellResult>,
}

/// Rejection count of one `(phi, mu)` cell; `cell` keys the RNG streams.
pub fn run_cell(grid: &GridSpec, phi: f64, mu: f64, cell: u64) -> Result<CellResult> {
    let rejected: Vec<bool> = (0..grid.reps)
        .into_par_iter()
        .map(|rep| {
            let data_seed = derive_seed(grid.seed, cell, 2 * rep as u64);
            let test_seed = derive_seed(grid.seed, cell, 2 * rep as u64 + 1);
            let sample = gen_ar1(&grid.cell_spec(phi, mu, data_seed))?;
            Ok(run_test(&sample, &grid.config(test_seed))?.decision.is_violation())
        })
        .collect::<Result<_>>()?;
    let rejections = rejected.iter().filter(|&&r| r).count();
    let rate = rejections as f64 / grid.reps as f64;
    Ok(CellResult {
        phi,
        mu,
        n: grid.n,
        delta: grid.delta,
        alpha: grid.alpha,
        reps: grid.reps,
        rejections,
        reject_rate: rate,
        stderr: (rate * (1.0 - rate) / grid.reps as f64).sqrt(),
    })
}

/// Runs every cell of the grid, `phi` major.
pub fn rejection_grid(grid: &GridSpec) -> Result<RejectionSurface> {
    grid.validate()?;
    let mut cells = Vec::with_capacity(grid.phis.len() * grid.mus.len());
    for (i, &phi) in grid.phis.iter().enumerate() {
        for (j, &mu) in grid.mus.iter().enumerate() {
            let cell = (i * grid.mus.len() + j) as u64;
            cells.push(run_cell(grid, phi, mu, cell)?);
        }
    }
    Ok(RejectionSurface {
        schema_version: crate::SCHEMA_VERSION,
        grid: grid.clone(),
        cells,
    })
}

impl RejectionSurface {
    /// Comma-separated table with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,mu,n,delta,alpha,reps,reject_rate,stderr\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.phi, c.mu, c.n, c.delta, c.alpha, c.reps, c.reject_rate, c.stderr
            );
        }
        out
    }
}
