//! Point-to-point directed polymer on the N x N lattice.
//!
//! Sites are 1-based `(i, j)` with `1 <= i, j <= n`; paths go from (1,1) to
//! (n,n) by unit steps in `i` or `j`. Storage is row-major and 0-based.
//! The partition function is `Z = sum_paths exp(sum_{sites} xi)`, always
//! handled as `log Z`.

use crate::parallel::map_indexed;
use crate::rng::{stream, Lane, StreamRng};
use crate::specfun::{digamma_real, polygamma_real, SpecError};
use crate::stats::{ks_one_sample, quantile_sorted, MeanEstimate};
use crate::weights::{WeightError, WeightFamily, WeightSampler};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest derivative order of `log Z` in a single site weight.
pub const MAX_DERIVATIVE_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolymerError {
    #[error("grid size must be at least 1")]
    EmptyGrid,
    #[error("expected {expected} weights for the grid, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("non-finite weight at site ({0}, {1})")]
    NonFiniteWeight(usize, usize),
    #[error("site ({i}, {j}) outside the {n} x {n} grid")]
    SiteOutOfRange { i: usize, j: usize, n: usize },
    #[error("derivative order {0} outside 1..={MAX_DERIVATIVE_ORDER}")]
    DerivativeOrder(usize),
    #[error("family has no exp-gamma shape parameter to fix the free-energy scale")]
    NoScale,
    #[error("need at least one replica")]
    NoReplicas,
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Special(#[from] SpecError),
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderGrid {
    pub n: usize,
    /// row-major: site `(i, j)` lives at `(i - 1) * n + (j - 1)`
    pub weights: Vec<f64>,
    /// generating family, `None` for hand-built grids
    pub family: Option<WeightFamily>,
    pub seed: u64,
    pub replica: u64,
}

impl DisorderGrid {
    /// Grid drawn from `family` using the streams of `(seed, replica)`.
    /// Sites are filled row by row.
    pub fn generate(n: usize, family: &WeightFamily, seed: u64, replica: u64) -> Result<Self, PolymerError> {
        if n == 0 {
            return Err(PolymerError::EmptyGrid);
        }
        let sampler = family.sampler()?;
        let mut base = stream(seed, replica, Lane::Disorder);
        let mut aux = stream(seed, replica, Lane::Perturbation);
        let weights = (0..n * n).map(|_| sampler.sample_split(&mut base, &mut aux)).collect();
        Ok(DisorderGrid { n, weights, family: Some(family.clone()), seed, replica })
    }

    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self, PolymerError> {
        if n == 0 {
            return Err(PolymerError::EmptyGrid);
        }
        if weights.len() != n * n {
            return Err(PolymerError::WeightCount { expected: n * n, got: weights.len() });
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(PolymerError::NonFiniteWeight(k / n + 1, k % n + 1));
        }
        Ok(DisorderGrid { n, weights, family: None, seed: 0, replica: 0 })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, PolymerError> {
        Self::from_weights(n, vec![value; n * n])
    }

    fn index(&self, i: usize, j: usize) -> Result<usize, PolymerError> {
        if i == 0 || j == 0 || i > self.n || j > self.n {
            return Err(PolymerError::SiteOutOfRange { i, j, n: self.n });
        }
        Ok((i - 1) * self.n + (j - 1))
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64, PolymerError> {
        Ok(self.weights[self.index(i, j)?])
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), PolymerError> {
        let k = self.index(i, j)?;
        self.weights[k] = value;
        Ok(())
    }
}

/// `log Z` by the recursion `logZ(i,j) = xi(i,j) + logaddexp(logZ(i-1,j), logZ(i,j-1))`.
pub fn log_partition(grid: &DisorderGrid) -> f64 {
    let n = grid.n;
    let mut row = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        let mut left = f64::NEG_INFINITY;
        for j in 0..n {
            let xi = grid.weights[i * n + j];
            let prev = if i == 0 && j == 0 { 0.0 } else { logaddexp(row[j], left) };
            left = xi + prev;
            row[j] = left;
        }
    }
    row[n - 1]
}

/// `log Z` of the grid `DisorderGrid::generate` would build, without storing it.
fn streamed_log_partition(n: usize, sampler: &WeightSampler, seed: u64, replica: u64) -> f64 {
    let mut base = stream(seed, replica, Lane::Disorder);
    let mut aux = stream(seed, replica, Lane::Perturbation);
    let mut row = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        let mut left = f64::NEG_INFINITY;
        for (j, cell) in row.iter_mut().enumerate() {
            let xi = sampler.sample_split(&mut base, &mut aux);
            let prev = if i == 0 && j == 0 { 0.0 } else { logaddexp(*cell, left) };
            left = xi + prev;
            *cell = left;
        }
    }
    row[n - 1]
}

/// Centering and scaling constants for `h_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyScale {
    pub theta: f64,
    /// `F = -2 Psi(theta / 2)`
    pub f: f64,
    /// `sigma = (-Psi''(theta / 2))^{1/3}`
    pub sigma: f64,
    /// `sigma N^{1/3}`
    pub tilde_sigma: f64,
    pub n: usize,
    /// Constant added to every site weight relative to the plain exp-gamma
    /// law (`Psi(theta)` for centered families); removed again in `h`.
    pub site_shift: f64,
}

impl FreeEnergyScale {
    pub fn new(theta: f64, n: usize) -> Result<Self, PolymerError> {
        let zc = theta / 2.0;
        let f = -2.0 * digamma_real(zc)?;
        let sigma = (-polygamma_real(2, zc)?).cbrt();
        Ok(FreeEnergyScale { theta, f, sigma, tilde_sigma: sigma * (n as f64).cbrt(), n, site_shift: 0.0 })
    }

    /// Scale of the exp-gamma law underlying `family`, aware of centering.
    pub fn for_family(family: &WeightFamily, n: usize) -> Result<Self, PolymerError> {
        let theta = family.theta().ok_or(PolymerError::NoScale)?;
        let mut scale = Self::new(theta, n)?;
        if family.centered {
            scale.site_shift = digamma_real(theta)?;
        }
        Ok(scale)
    }

    /// Intermediate-disorder rule `beta_N = N^{-alpha}`, i.e. `theta_N = N^{2 alpha}`.
    pub fn intermediate(alpha: f64, n: usize) -> Result<Self, PolymerError> {
        Self::new((n as f64).powf(2.0 * alpha), n)
    }
}

/// `h = (log Z - N F) / (sigma N^{1/3})`.
pub fn scaled_h(log_z: f64, scale: &FreeEnergyScale) -> f64 {
    let n = scale.n as f64;
    let uncentered = log_z - (2.0 * n - 1.0) * scale.site_shift;
    (uncentered - n * scale.f) / scale.tilde_sigma
}

/// `log Z` for replicas `0..replicas`, in replica order.
pub fn simulate_log_partitions(
    n: usize,
    family: &WeightFamily,
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>, PolymerError> {
    if n == 0 {
        return Err(PolymerError::EmptyGrid);
    }
    if replicas == 0 {
        return Err(PolymerError::NoReplicas);
    }
    let sampler = family.sampler()?;
    Ok(map_indexed(workers, replicas, |r| streamed_log_partition(n, &sampler, seed, r as u64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub n: usize,
    pub family: WeightFamily,
    pub seed: u64,
    pub replicas: usize,
    pub scale: FreeEnergyScale,
}

/// Sorted samples of `h_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub samples: Vec<f64>,
    pub meta: EnsembleMeta,
}

impl EmpiricalDistribution {
    pub fn from_log_partitions(log_z: &[f64], meta: EnsembleMeta) -> Self {
        let mut samples: Vec<f64> = log_z.iter().map(|l| scaled_h(*l, &meta.scale)).collect();
        samples.sort_by(f64::total_cmp);
        EmpiricalDistribution { samples, meta }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Right-continuous empirical CDF, `#{h <= x} / len`.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.samples.partition_point(|s| *s <= x);
        count as f64 / self.samples.len() as f64
    }

    pub fn ks_against(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        ks_one_sample(&self.samples, cdf)
    }

    pub fn mean(&self) -> MeanEstimate {
        MeanEstimate::from_samples(&self.samples)
    }

    /// One value per line, shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 20);
        out.push_str("h\n");
        for s in &self.samples {
            out.push_str(&format!("{s}\n"));
        }
        out
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.meta).unwrap_or(serde_json::Value::Null)
    }
}

/// `h_N` ensemble for an exp-gamma based family.
pub fn simulate_ensemble(
    n: usize,
    family: &WeightFamily,
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<EmpiricalDistribution, PolymerError> {
    let scale = FreeEnergyScale::for_family(family, n)?;
    let log_z = simulate_log_partitions(n, family, replicas, seed, workers)?;
    let meta = EnsembleMeta { n, family: family.clone(), seed, replicas, scale };
    Ok(EmpiricalDistribution::from_log_partitions(&log_z, meta))
}

/// Forward and backward partition tables. `forward(i,j)` sums paths from
/// (1,1) to (i,j), `backward(i,j)` paths from (i,j) to (n,n); both include
/// the weight at (i,j).
#[derive(Debug, Clone)]
pub struct OccupationTable {
    n: usize,
    forward: Vec<f64>,
    backward: Vec<f64>,
    weights: Vec<f64>,
    pub log_z: f64,
}

impl OccupationTable {
    pub fn new(grid: &DisorderGrid) -> Self {
        let n = grid.n;
        let w = &grid.weights;
        let mut forward = vec![f64::NEG_INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                let up = if i > 0 { forward[(i - 1) * n + j] } else { f64::NEG_INFINITY };
                let left = if j > 0 { forward[i * n + j - 1] } else { f64::NEG_INFINITY };
                let prev = if i == 0 && j == 0 { 0.0 } else { logaddexp(up, left) };
                forward[i * n + j] = w[i * n + j] + prev;
            }
        }
        let mut backward = vec![f64::NEG_INFINITY; n * n];
        for i in (0..n).rev() {
            for j in (0..n).rev() {
                let down = if i + 1 < n { backward[(i + 1) * n + j] } else { f64::NEG_INFINITY };
                let right = if j + 1 < n { backward[i * n + j + 1] } else { f64::NEG_INFINITY };
                let next = if i + 1 == n && j + 1 == n { 0.0 } else { logaddexp(down, right) };
                backward[i * n + j] = w[i * n + j] + next;
            }
        }
        let log_z = forward[n * n - 1];
        OccupationTable { n, forward, backward, weights: w.clone(), log_z }
    }

    /// Gibbs probability that the path visits `(i, j)` (1-based).
    pub fn occupation(&self, i: usize, j: usize) -> Result<f64, PolymerError> {
        if i == 0 || j == 0 || i > self.n || j > self.n {
            return Err(PolymerError::SiteOutOfRange { i, j, n: self.n });
        }
        let k = (i - 1) * self.n + (j - 1);
        Ok((self.forward[k] + self.backward[k] - self.weights[k] - self.log_z).exp().min(1.0))
    }

    /// Log weight of all path continuations from 0-based `(i, j)`.
    fn backward_at(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n {
            f64::NEG_INFINITY
        } else {
            self.backward[i * self.n + j]
        }
    }
}

pub fn site_occupation(grid: &DisorderGrid, i: usize, j: usize) -> Result<f64, PolymerError> {
    OccupationTable::new(grid).occupation(i, j)
}

/// Coefficients (ascending powers of `p`) of `P_1, ..., P_order`, where
/// `P_1 = p` and `P_{m+1} = P_m'(p) p (1 - p)`.
pub fn derivative_polynomials(order: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0, 1.0]];
    for _ in 1..order {
        let prev = out.last().expect("non-empty");
        // derivative, then multiply by p - p^2
        let deriv: Vec<f64> = prev.iter().enumerate().skip(1).map(|(d, c)| d as f64 * c).collect();
        let mut next = vec![0.0; deriv.len() + 2];
        for (d, c) in deriv.iter().enumerate() {
            next[d + 1] += c;
            next[d + 2] -= c;
        }
        out.push(next);
    }
    out
}

fn eval_poly(coefficients: &[f64], p: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * p + c)
}

/// `d^m/dy^m log Z` for `m = 1..=max_order`, where `y` is the weight of site
/// `(i, j)`. Since `Z(y) = Z_rest + Z_site e^y`, every derivative is a
/// polynomial in the occupation probability.
pub fn logz_derivatives(grid: &DisorderGrid, i: usize, j: usize, max_order: usize) -> Result<Vec<f64>, PolymerError> {
    if max_order == 0 || max_order > MAX_DERIVATIVE_ORDER {
        return Err(PolymerError::DerivativeOrder(max_order));
    }
    let p = site_occupation(grid, i, j)?;
    Ok(derivative_polynomials(max_order).iter().map(|c| eval_poly(c, p)).collect())
}

/// Up-right path as 1-based sites from (1,1) to (n,n).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSample {
    pub sites: Vec<(usize, usize)>,
}

impl PathSample {
    /// Site on the anti-diagonal `i + j = n + 1`.
    pub fn midpoint(&self) -> (usize, usize) {
        let n = self.sites.len().div_ceil(2);
        self.sites[n - 1]
    }
}

/// Draws a path from the Gibbs measure: at each site step towards the
/// neighbour with probability proportional to its backward partition sum.
pub fn sample_path<R: Rng + ?Sized>(table: &OccupationTable, rng: &mut R) -> PathSample {
    let n = table.n;
    let mut sites = Vec::with_capacity(2 * n - 1);
    let (mut i, mut j) = (0usize, 0usize);
    sites.push((1, 1));
    while i + 1 < n || j + 1 < n {
        let down = table.backward_at(i + 1, j);
        let right = table.backward_at(i, j + 1);
        let p_down = if down == f64::NEG_INFINITY {
            0.0
        } else if right == f64::NEG_INFINITY {
            1.0
        } else {
            1.0 / (1.0 + (right - down).exp())
        };
        if rng.random::<f64>() < p_down {
            i += 1;
        } else {
            j += 1;
        }
        sites.push((i + 1, j + 1));
    }
    PathSample { sites }
}

/// `n_paths` Gibbs paths on one grid, drawn from the `Paths` lane.
pub fn sample_paths(grid: &DisorderGrid, n_paths: usize, seed: u64) -> Vec<PathSample> {
    let table = OccupationTable::new(grid);
    let mut rng: StreamRng = stream(seed, grid.replica, Lane::Paths);
    (0..n_paths).map(|_| sample_path(&table, &mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Statistics of `|i - j| / 2` at each path's midpoint.
pub fn midpoint_displacement(paths: &[PathSample]) -> DisplacementSummary {
    let mut d: Vec<f64> = paths
        .iter()
        .map(|p| {
            let (i, j) = p.midpoint();
            (i as f64 - j as f64).abs() / 2.0
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let mean = if d.is_empty() { f64::NAN } else { d.iter().sum::<f64>() / d.len() as f64 };
    DisplacementSummary {
        count: d.len(),
        mean,
        median: quantile_sorted(&d, 0.5),
        q10: quantile_sorted(&d, 0.1),
        q90: quantile_sorted(&d, 0.9),
    }
}

/// Smooth test functions for distributional comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `exp(-1 / (1 - x^2))` of `(h + 2) / 2`, supported on [-4, 0]
    Bump,
    Tanh,
    /// standard normal CDF
    GaussianCdf,
}

impl TestFunction {
    pub fn eval(self, h: f64) -> f64 {
        match self {
            TestFunction::Bump => {
                let x = (h + 2.0) / 2.0;
                if x.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - x * x)).exp()
                }
            }
            TestFunction::Tanh => h.tanh(),
            TestFunction::GaussianCdf => 0.5 * libm::erfc(-h / std::f64::consts::SQRT_2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `|E phi(h_A) - E phi(h_B)|`
    pub gap: f64,
    /// standard error of the paired difference
    pub std_error: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub replicas: usize,
}

/// Paired estimate of the test-function gap between two families. Replica
/// `r` of both families reads the same random streams, and both are scaled
/// with the free-energy constants of `fam_a`.
pub fn lindeberg_gap(
    fam_a: &WeightFamily,
    fam_b: &WeightFamily,
    phi: TestFunction,
    n: usize,
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<GapEstimate, PolymerError> {
    let scale = FreeEnergyScale::for_family(fam_a, n)?;
    let a = simulate_log_partitions(n, fam_a, replicas, seed, workers)?;
    let b = simulate_log_partitions(n, fam_b, replicas, seed, workers)?;
    let pa: Vec<f64> = a.iter().map(|l| phi.eval(scaled_h(*l, &scale))).collect();
    let pb: Vec<f64> = b.iter().map(|l| phi.eval(scaled_h(*l, &scale))).collect();
    let diff: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
    let d = MeanEstimate::from_samples(&diff);
    Ok(GapEstimate {
        gap: d.mean.abs(),
        std_error: d.std_error,
        mean_a: MeanEstimate::from_samples(&pa).mean,
        mean_b: MeanEstimate::from_samples(&pb).mean,
        replicas,
    })
}
