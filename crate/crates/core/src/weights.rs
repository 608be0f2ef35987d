//! Disorder families, their analytic moments, and the moment-matching check.
//!
//! Sign convention: a site contributes the factor `e^{xi}` to the partition
//! function. For the log-gamma model `e^{-xi} ~ Gamma(theta, 1)`, so the
//! multiplicative weight is inverse-gamma distributed.

use crate::rng::{stream, Lane, StreamRng};
use crate::specfun::{polygamma_real, SpecError};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest order accepted by [`moments_from_cumulants`]; Bell(12) = 4,213,597.
pub const MAX_PARTITION_ORDER: usize = 12;

/// Default beta grid for [`check_moment_matching`].
pub const DEFAULT_BETA_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Monte Carlo samples per beta when analytic moments are unavailable.
pub const DEFAULT_MC_SAMPLES: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid family parameter: {0}")]
    InvalidParameter(String),
    #[error("order {order} exceeds the partition-enumeration cap {cap}")]
    OrderTooLarge { order: usize, cap: usize },
    #[error("alpha = {0} is outside (0, 1/4]")]
    AlphaOutOfRange(f64),
    #[error(transparent)]
    Special(#[from] SpecError),
}

/// Unit-variance, mean-zero base laws for [`FamilyKind::ScaledBase`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDist {
    Gaussian,
    Rademacher,
    /// Uniform on [-sqrt 3, sqrt 3].
    Uniform,
}

impl BaseDist {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            BaseDist::Gaussian => rng.sample(StandardNormal),
            BaseDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            BaseDist::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    fn raw_moment(self, n: usize) -> f64 {
        if n % 2 == 1 {
            return 0.0;
        }
        let m = n / 2;
        match self {
            // (n-1)!!
            BaseDist::Gaussian => (1..=m).map(|j| (2 * j - 1) as f64).product(),
            BaseDist::Rademacher => 1.0,
            BaseDist::Uniform => 3f64.powi(m as i32) / (n as f64 + 1.0),
        }
    }
}

/// Law of the multiplicative perturbation `X` in `xi (1 + X beta^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbationDist {
    Zero,
    Uniform { half_width: f64 },
    Rademacher { amplitude: f64 },
    /// Standard normal clamped to [-bound, bound]; no closed-form moments.
    ClippedNormal { bound: f64 },
}

impl PerturbationDist {
    /// Almost-sure bound on |X|, hence on every absolute moment.
    pub fn abs_bound(self) -> f64 {
        match self {
            PerturbationDist::Zero => 0.0,
            PerturbationDist::Uniform { half_width } => half_width,
            PerturbationDist::Rademacher { amplitude } => amplitude,
            PerturbationDist::ClippedNormal { bound } => bound,
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            PerturbationDist::Zero => 0.0,
            PerturbationDist::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            PerturbationDist::Rademacher { amplitude } => {
                if rng.random::<bool>() {
                    amplitude
                } else {
                    -amplitude
                }
            }
            PerturbationDist::ClippedNormal { bound } => {
                let z: f64 = rng.sample(StandardNormal);
                z.clamp(-bound, bound)
            }
        }
    }

    fn raw_moment(self, n: usize) -> Option<f64> {
        if n == 0 {
            return Some(1.0);
        }
        match self {
            PerturbationDist::Zero => Some(0.0),
            PerturbationDist::Uniform { half_width } => {
                Some(if n % 2 == 1 { 0.0 } else { half_width.powi(n as i32) / (n as f64 + 1.0) })
            }
            PerturbationDist::Rademacher { amplitude } => {
                Some(if n % 2 == 1 { 0.0 } else { amplitude.powi(n as i32) })
            }
            PerturbationDist::ClippedNormal { .. } => None,
        }
    }

    fn validate(self) -> Result<(), WeightError> {
        let b = self.abs_bound();
        if !b.is_finite() || b < 0.0 {
            return Err(WeightError::InvalidParameter(format!("perturbation bound {b}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `-xi` is log-gamma: `e^{-xi} ~ Gamma(theta, 1)`.
    ExpGamma { theta: f64 },
    /// `xi = beta * Y` with `Y` from a unit-variance base law.
    ScaledBase { beta: f64, base: BaseDist },
    /// `xi = xi_base * (1 + X beta^k)`, `X` independent of the base sample.
    Perturbed { base: Box<WeightFamily>, k: u32, perturbation: PerturbationDist },
}

/// A site-weight law. `centered` subtracts the mean of the exp-gamma law;
/// the scaled base laws are mean-zero already, and a perturbed family
/// inherits the centering of its base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    pub kind: FamilyKind,
    pub centered: bool,
}

impl WeightFamily {
    pub fn exp_gamma(theta: f64) -> Self {
        WeightFamily { kind: FamilyKind::ExpGamma { theta }, centered: false }
    }

    pub fn scaled(beta: f64, base: BaseDist) -> Self {
        WeightFamily { kind: FamilyKind::ScaledBase { beta, base }, centered: true }
    }

    pub fn perturbed(base: WeightFamily, k: u32, perturbation: PerturbationDist) -> Self {
        let centered = base.centered;
        WeightFamily { kind: FamilyKind::Perturbed { base: Box::new(base), k, perturbation }, centered }
    }

    pub fn centered(mut self) -> Self {
        self.centered = true;
        if let FamilyKind::Perturbed { base, .. } = &mut self.kind {
            base.centered = true;
        }
        self
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        match &self.kind {
            FamilyKind::ExpGamma { theta } => {
                if !(theta.is_finite() && *theta > 0.0) {
                    return Err(WeightError::InvalidParameter(format!("theta = {theta}")));
                }
            }
            FamilyKind::ScaledBase { beta, .. } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(WeightError::InvalidParameter(format!("beta = {beta}")));
                }
            }
            FamilyKind::Perturbed { base, k, perturbation } => {
                if *k < 1 {
                    return Err(WeightError::InvalidParameter("perturbation order k must be >= 1".into()));
                }
                perturbation.validate()?;
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Disorder strength: `theta^{-1/2}` for exp-gamma, `beta` for scaled laws.
    pub fn beta(&self) -> f64 {
        match &self.kind {
            FamilyKind::ExpGamma { theta } => theta.powf(-0.5),
            FamilyKind::ScaledBase { beta, .. } => *beta,
            FamilyKind::Perturbed { base, .. } => base.beta(),
        }
    }

    /// Shape parameter of the underlying exp-gamma law, if there is one.
    pub fn theta(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::ExpGamma { theta } => Some(*theta),
            FamilyKind::ScaledBase { .. } => None,
            FamilyKind::Perturbed { base, .. } => base.theta(),
        }
    }

    /// The same family re-instantiated at disorder strength `beta`
    /// (`theta = beta^{-2}` for exp-gamma).
    pub fn with_beta(&self, beta: f64) -> Self {
        let kind = match &self.kind {
            FamilyKind::ExpGamma { .. } => FamilyKind::ExpGamma { theta: beta.powi(-2) },
            FamilyKind::ScaledBase { base, .. } => FamilyKind::ScaledBase { beta, base: *base },
            FamilyKind::Perturbed { base, k, perturbation } => FamilyKind::Perturbed {
                base: Box::new(base.with_beta(beta)),
                k: *k,
                perturbation: *perturbation,
            },
        };
        WeightFamily { kind, centered: self.centered }
    }

    /// Amount added to each raw sample by centering.
    fn center_shift(&self) -> f64 {
        match &self.kind {
            FamilyKind::ExpGamma { theta } if self.centered => {
                // E[xi] = -Psi(theta)
                crate::specfun::digamma_real(*theta).unwrap_or(f64::NAN)
            }
            _ => 0.0,
        }
    }

    /// Builds a reusable sampler (precomputes the gamma law and centering).
    pub fn sampler(&self) -> Result<WeightSampler, WeightError> {
        self.validate()?;
        WeightSampler::new(self)
    }

    /// Whether every raw moment is available in closed form.
    pub fn has_analytic_moments(&self) -> bool {
        match &self.kind {
            FamilyKind::Perturbed { base, perturbation, .. } => {
                perturbation.raw_moment(1).is_some() && base.has_analytic_moments()
            }
            _ => true,
        }
    }

    /// Raw moments `E[xi^n]`, `n = 1..=k`, with cumulants, when available.
    pub fn analytic_moments(&self, k: usize) -> Result<Option<MomentSet>, WeightError> {
        self.validate()?;
        let moments = match self.raw_moments(k)? {
            Some(m) => m,
            None => return Ok(None),
        };
        let cumulants = cumulants_from_moments(&moments);
        Ok(Some(MomentSet { order: k, cumulants, moments }))
    }

    fn raw_moments(&self, k: usize) -> Result<Option<Vec<f64>>, WeightError> {
        match &self.kind {
            FamilyKind::ExpGamma { theta } => {
                let set = exp_gamma_cumulants(*theta, k, self.centered)?;
                // cumulants of ln G; those of xi = -ln G flip odd orders
                let kappa: Vec<f64> = set
                    .cumulants
                    .iter()
                    .enumerate()
                    .map(|(j, c)| if j % 2 == 0 { -c } else { *c })
                    .collect();
                Ok(Some(moments_from_cumulants(&kappa)?))
            }
            FamilyKind::ScaledBase { beta, base } => {
                Ok(Some((1..=k).map(|n| beta.powi(n as i32) * base.raw_moment(n)).collect()))
            }
            FamilyKind::Perturbed { base, k: order, perturbation } => {
                let base_moments = match base.raw_moments(k)? {
                    Some(m) => m,
                    None => return Ok(None),
                };
                let mut x_moments = Vec::with_capacity(k + 1);
                for j in 0..=k {
                    match perturbation.raw_moment(j) {
                        Some(v) => x_moments.push(v),
                        None => return Ok(None),
                    }
                }
                let eps = base.beta().powi(*order as i32);
                // E[(xi (1 + eps X))^n] = E[xi^n] sum_j C(n, j) eps^j E[X^j]
                let out = (1..=k)
                    .map(|n| {
                        let factor: f64 = (0..=n).map(|j| binomial(n, j) * eps.powi(j as i32) * x_moments[j]).sum();
                        base_moments[n - 1] * factor
                    })
                    .collect();
                Ok(Some(out))
            }
        }
    }
}

/// Draws site weights for one family. Perturbed families take the base
/// sample and the perturbation from separate streams so that a base family
/// and its perturbation share disorder under common random numbers.
#[derive(Debug, Clone)]
pub struct WeightSampler {
    inner: SamplerKind,
    shift: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    ExpGamma(Gamma<f64>),
    Constant(f64),
    Scaled(f64, BaseDist),
    Perturbed { base: Box<WeightSampler>, eps: f64, perturbation: PerturbationDist },
}

impl WeightSampler {
    fn new(family: &WeightFamily) -> Result<Self, WeightError> {
        let inner = match &family.kind {
            FamilyKind::ExpGamma { theta } => SamplerKind::ExpGamma(
                Gamma::new(*theta, 1.0).map_err(|e| WeightError::InvalidParameter(e.to_string()))?,
            ),
            FamilyKind::ScaledBase { beta, .. } if *beta == 0.0 => SamplerKind::Constant(0.0),
            FamilyKind::ScaledBase { beta, base } => SamplerKind::Scaled(*beta, *base),
            FamilyKind::Perturbed { base, k, perturbation } => SamplerKind::Perturbed {
                base: Box::new(WeightSampler::new(base)?),
                eps: base.beta().powi(*k as i32),
                perturbation: *perturbation,
            },
        };
        Ok(WeightSampler { inner, shift: family.center_shift() })
    }

    /// One weight, with the perturbation (if any) drawn from `aux`.
    pub fn sample_split<R: Rng + ?Sized, S: Rng + ?Sized>(&self, base: &mut R, aux: &mut S) -> f64 {
        match &self.inner {
            SamplerKind::ExpGamma(g) => {
                let x: f64 = g.sample(base);
                -x.max(f64::MIN_POSITIVE).ln() + self.shift
            }
            SamplerKind::Constant(c) => *c,
            SamplerKind::Scaled(beta, dist) => beta * dist.sample(base),
            SamplerKind::Perturbed { base: inner, eps, perturbation } => {
                let xi = inner.sample_split(base, aux);
                if matches!(perturbation, PerturbationDist::Zero) {
                    return xi;
                }
                xi * (1.0 + perturbation.sample(aux) * eps)
            }
        }
    }

    /// One weight, everything drawn from a single stream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            SamplerKind::Perturbed { base: inner, eps, perturbation } => {
                let xi = inner.sample(rng);
                if matches!(perturbation, PerturbationDist::Zero) {
                    return xi;
                }
                xi * (1.0 + perturbation.sample(rng) * eps)
            }
            _ => {
                let mut dummy = NoRng;
                self.sample_split(rng, &mut dummy)
            }
        }
    }
}

/// Placeholder auxiliary stream for families that never touch it.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("auxiliary stream used by a family without a perturbation")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("auxiliary stream used by a family without a perturbation")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("auxiliary stream used by a family without a perturbation")
    }
}

/// Single draw from `family`.
pub fn sample_weight<R: Rng + ?Sized>(family: &WeightFamily, rng: &mut R) -> Result<f64, WeightError> {
    Ok(family.sampler()?.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub order: usize,
    /// kappa_1..kappa_k
    pub cumulants: Vec<f64>,
    /// raw moments mu_1..mu_k (central when kappa_1 = 0)
    pub moments: Vec<f64>,
}

/// Cumulants of `ln G`, `G ~ Gamma(theta)`: `kappa_j = Psi^{(j-1)}(theta)`.
/// With `centered`, `kappa_1 = 0`. Moments are filled by the partition sum.
pub fn exp_gamma_cumulants(theta: f64, k: usize, centered: bool) -> Result<MomentSet, WeightError> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(WeightError::InvalidParameter(format!("theta = {theta}")));
    }
    if k == 0 {
        return Err(WeightError::InvalidParameter("order must be at least 1".into()));
    }
    let mut cumulants = Vec::with_capacity(k);
    for j in 0..k {
        cumulants.push(polygamma_real(j as u32, theta)?);
    }
    if centered {
        cumulants[0] = 0.0;
    }
    let moments = moments_from_cumulants(&cumulants)?;
    Ok(MomentSet { order: k, cumulants, moments })
}

/// Raw moments from cumulants by summing `prod_B kappa_{|B|}` over all set
/// partitions of {1..n}, for each n up to the input length.
pub fn moments_from_cumulants(cumulants: &[f64]) -> Result<Vec<f64>, WeightError> {
    let k = cumulants.len();
    if k > MAX_PARTITION_ORDER {
        return Err(WeightError::OrderTooLarge { order: k, cap: MAX_PARTITION_ORDER });
    }
    let mut out = Vec::with_capacity(k);
    let mut blocks = Vec::with_capacity(k);
    for n in 1..=k {
        blocks.clear();
        out.push(partition_sum(n, 0, &mut blocks, cumulants));
    }
    Ok(out)
}

/// Places element `next` into an existing block or a new one (restricted
/// growth order), multiplying block cumulants at the leaves.
fn partition_sum(n: usize, next: usize, blocks: &mut Vec<usize>, kappa: &[f64]) -> f64 {
    if next == n {
        return blocks.iter().map(|&size| kappa[size - 1]).product();
    }
    let mut total = 0.0;
    for b in 0..blocks.len() {
        blocks[b] += 1;
        total += partition_sum(n, next + 1, blocks, kappa);
        blocks[b] -= 1;
    }
    blocks.push(1);
    total += partition_sum(n, next + 1, blocks, kappa);
    blocks.pop();
    total
}

/// Inverse map: `kappa_n = mu_n - sum_{j<n} C(n-1, j-1) kappa_j mu_{n-j}`.
pub fn cumulants_from_moments(moments: &[f64]) -> Vec<f64> {
    let mut kappa: Vec<f64> = Vec::with_capacity(moments.len());
    for n in 1..=moments.len() {
        let mut value = moments[n - 1];
        for j in 1..n {
            value -= binomial(n - 1, j - 1) * kappa[j - 1] * moments[n - j - 1];
        }
        kappa.push(value);
    }
    kappa
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest integer strictly greater than `5/(3 alpha) + 4/3`.
pub fn required_order(alpha: f64) -> Result<u32, WeightError> {
    if !(alpha > 0.0 && alpha <= 0.25) {
        return Err(WeightError::AlphaOutOfRange(alpha));
    }
    let bound = (5.0 + 4.0 * alpha) / (3.0 * alpha);
    let snapped = if (bound - bound.round()).abs() < 1e-12 { bound.round() } else { bound };
    Ok(snapped.floor() as u32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub order: usize,
    pub beta_grid: Vec<f64>,
    /// `gaps[b][n-1] = |E[xi^n] - E[xi~^n]|` for `n < order`
    pub gaps: Vec<Vec<f64>>,
    /// Monte Carlo standard errors of the gaps (empty in analytic mode)
    pub gap_std_errors: Vec<Vec<f64>>,
    /// `[|E[xi^k]|, |E[xi~^k]|]` per beta
    pub kth_moments: Vec<[f64; 2]>,
    /// `max(gaps, kth moments) / beta^k` per beta
    pub ratios: Vec<f64>,
    pub fitted_constant: f64,
    pub mode: MatchMode,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct MatchOptions {
    pub mc_samples: usize,
    pub seed: u64,
    /// Allowed growth of the ratio from the largest to the smallest beta.
    pub growth_tolerance: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { mc_samples: DEFAULT_MC_SAMPLES, seed: 0x5eed, growth_tolerance: 2.0 }
    }
}

/// Moment matching of order `k` on a beta grid with default options.
pub fn check_moment_matching(
    fam_a: &WeightFamily,
    fam_b: &WeightFamily,
    k: usize,
    beta_grid: &[f64],
) -> Result<MatchReport, WeightError> {
    check_moment_matching_with(fam_a, fam_b, k, beta_grid, MatchOptions::default())
}

/// Moment matching of order `k`. The fitted constant is the least `C` with
/// every gap and both k-th moments below `C beta^k` on the grid. The check
/// passes when `max(...)/beta^k` at the smallest beta is at most
/// `growth_tolerance` times its value at the largest beta, i.e. the ratio
/// stays bounded as beta shrinks.
pub fn check_moment_matching_with(
    fam_a: &WeightFamily,
    fam_b: &WeightFamily,
    k: usize,
    beta_grid: &[f64],
    options: MatchOptions,
) -> Result<MatchReport, WeightError> {
    if k == 0 || beta_grid.is_empty() || beta_grid.iter().any(|b| !(*b > 0.0)) {
        return Err(WeightError::InvalidParameter("need k >= 1 and a positive beta grid".into()));
    }
    fam_a.validate()?;
    fam_b.validate()?;
    let analytic = fam_a.has_analytic_moments() && fam_b.has_analytic_moments() && k <= MAX_PARTITION_ORDER;
    let mode = if analytic { MatchMode::Analytic } else { MatchMode::MonteCarlo };

    let mut gaps = Vec::new();
    let mut gap_std_errors = Vec::new();
    let mut kth_moments = Vec::new();
    let mut ratios = Vec::new();
    for (index, &beta) in beta_grid.iter().enumerate() {
        let a = fam_a.with_beta(beta);
        let b = fam_b.with_beta(beta);
        let (gap, se, kth) = if analytic {
            let ma = a.raw_moments(k)?.expect("analytic moments");
            let mb = b.raw_moments(k)?.expect("analytic moments");
            let gap: Vec<f64> = (0..k - 1).map(|n| (ma[n] - mb[n]).abs()).collect();
            (gap, Vec::new(), [ma[k - 1].abs(), mb[k - 1].abs()])
        } else {
            mc_moment_gaps(&a, &b, k, options.mc_samples, options.seed.wrapping_add(index as u64))?
        };
        let scale = beta.powi(k as i32);
        // in Monte Carlo mode a gap within 3 SE of zero counts as zero
        let effective = gap
            .iter()
            .enumerate()
            .map(|(n, g)| if se.is_empty() { *g } else { (g - 3.0 * se[n]).max(0.0) })
            .fold(kth[0].max(kth[1]), f64::max);
        ratios.push(effective / scale);
        gaps.push(gap);
        gap_std_errors.push(se);
        kth_moments.push(kth);
    }
    let fitted_constant = ratios.iter().copied().fold(0.0, f64::max);
    let (largest, smallest) = extreme_indices(beta_grid);
    let pass = ratios.iter().all(|r| r.is_finite())
        && ratios[smallest] <= options.growth_tolerance * ratios[largest] + f64::MIN_POSITIVE;
    Ok(MatchReport {
        order: k,
        beta_grid: beta_grid.to_vec(),
        gaps,
        gap_std_errors,
        kth_moments,
        ratios,
        fitted_constant,
        mode,
        pass,
    })
}

fn extreme_indices(grid: &[f64]) -> (usize, usize) {
    let mut largest = 0;
    let mut smallest = 0;
    for (i, b) in grid.iter().enumerate() {
        if *b > grid[largest] {
            largest = i;
        }
        if *b < grid[smallest] {
            smallest = i;
        }
    }
    (largest, smallest)
}

type McGaps = (Vec<f64>, Vec<f64>, [f64; 2]);

/// Paired Monte Carlo estimate: both families read the same disorder and
/// perturbation streams, so the gap variance reflects only the difference.
fn mc_moment_gaps(a: &WeightFamily, b: &WeightFamily, k: usize, samples: usize, seed: u64) -> Result<McGaps, WeightError> {
    let sa = a.sampler()?;
    let sb = b.sampler()?;
    let mut base_a = stream(seed, 0, Lane::Disorder);
    let mut aux_a = stream(seed, 0, Lane::Perturbation);
    let mut base_b = stream(seed, 0, Lane::Disorder);
    let mut aux_b = stream(seed, 0, Lane::Perturbation);
    let mut diff_sum = vec![0.0; k];
    let mut diff_sq = vec![0.0; k];
    let mut kth = [0.0; 2];
    for _ in 0..samples {
        let xa = sa.sample_split(&mut base_a, &mut aux_a);
        let xb = sb.sample_split(&mut base_b, &mut aux_b);
        // keep the streams aligned when only one family perturbs
        sync_streams(&mut aux_a, &mut aux_b);
        let (mut pa, mut pb) = (1.0, 1.0);
        for n in 0..k {
            pa *= xa;
            pb *= xb;
            let d = pa - pb;
            diff_sum[n] += d;
            diff_sq[n] += d * d;
        }
        kth[0] += pa;
        kth[1] += pb;
    }
    let m = samples as f64;
    let mut gap = Vec::with_capacity(k - 1);
    let mut se = Vec::with_capacity(k - 1);
    for n in 0..k - 1 {
        let mean = diff_sum[n] / m;
        let var = (diff_sq[n] / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
        gap.push(mean.abs());
        se.push((var / m).sqrt());
    }
    Ok((gap, se, [(kth[0] / m).abs(), (kth[1] / m).abs()]))
}

fn sync_streams(a: &mut StreamRng, b: &mut StreamRng) {
    let (wa, wb) = (a.get_word_pos(), b.get_word_pos());
    if wa < wb {
        a.set_word_pos(wb);
    } else if wb < wa {
        b.set_word_pos(wa);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{digamma_real, EULER_MASCHERONI};
    use std::f64::consts::PI;

    /// Moment recursion `mu_n = sum_j C(n-1, j-1) kappa_j mu_{n-j}`, an
    /// oracle independent of the partition enumeration.
    fn moments_by_recursion(kappa: &[f64]) -> Vec<f64> {
        let mut mu = vec![1.0];
        for n in 1..=kappa.len() {
            let v = (1..=n).map(|j| binomial(n - 1, j - 1) * kappa[j - 1] * mu[n - j]).sum();
            mu.push(v);
        }
        mu[1..].to_vec()
    }

    fn mc_raw_moments(family: &WeightFamily, k: usize, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let s = family.sampler().unwrap();
        let mut rng = stream(seed, 0, Lane::Disorder);
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for _ in 0..samples {
            let x = s.sample(&mut rng);
            let mut p = 1.0;
            for n in 0..k {
                p *= x;
                sum[n] += p;
                sq[n] += p * p;
            }
        }
        let m = samples as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
        let se = (0..k).map(|n| ((sq[n] / m - mean[n] * mean[n]) / (m - 1.0)).sqrt()).collect();
        (mean, se)
    }

    #[test]
    fn partition_sum_examples() {
        let s2 = 1.7;
        let mu = moments_from_cumulants(&[0.0, s2, 0.0, 0.0]).unwrap();
        assert!((mu[3] - 3.0 * s2 * s2).abs() < 1e-14);
        let m = 1.3;
        let mu = moments_from_cumulants(&[m, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for (n, v) in mu.iter().enumerate() {
            assert!((v - m.powi(n as i32 + 1)).abs() < 1e-12);
        }
        let mu = moments_from_cumulants(&[0.0, 0.4, -0.9]).unwrap();
        assert!((mu[2] + 0.9).abs() < 1e-15);
        assert!(matches!(
            moments_from_cumulants(&[0.1; 13]),
            Err(WeightError::OrderTooLarge { order: 13, cap: 12 })
        ));
    }

    #[test]
    fn partition_sum_matches_recursion_up_to_cap() {
        let kappa: Vec<f64> = (1..=10).map(|j| 0.3 * (j as f64).sin()).collect();
        let a = moments_from_cumulants(&kappa).unwrap();
        let b = moments_by_recursion(&kappa);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-3), "{x} vs {y}");
        }
    }

    #[test]
    fn exp_gamma_cumulant_examples() {
        let set = exp_gamma_cumulants(1.0, 3, false).unwrap();
        assert!((set.cumulants[0] + EULER_MASCHERONI).abs() < 1e-14);
        assert!((set.cumulants[1] - PI * PI / 6.0).abs() < 1e-12);
        assert!((set.moments[1] - set.cumulants[1] - set.cumulants[0].powi(2)).abs() < 1e-14);
        let set = exp_gamma_cumulants(3.5, 4, true).unwrap();
        assert_eq!(set.cumulants[0], 0.0);
        assert_eq!(set.moments[0], 0.0);
        let raw = exp_gamma_cumulants(3.5, 1, false).unwrap();
        assert!((raw.cumulants[0] - digamma_real(3.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn exp_gamma_sample_mean() {
        let fam = WeightFamily::exp_gamma(2.0);
        let (mean, se) = mc_raw_moments(&fam, 1, 1_000_000, 11);
        let want = EULER_MASCHERONI - 1.0;
        assert!((mean[0] - want).abs() < 3.0 * se[0], "{} vs {want} (se {})", mean[0], se[0]);
    }

    #[test]
    fn trivial_families() {
        let zero = WeightFamily::scaled(0.0, BaseDist::Gaussian);
        let mut rng = stream(1, 0, Lane::Disorder);
        for _ in 0..10 {
            assert_eq!(sample_weight(&zero, &mut rng).unwrap(), 0.0);
        }
        // X = 0 perturbation reproduces the base draws exactly
        let base = WeightFamily::exp_gamma(2.0).centered();
        let pert = WeightFamily::perturbed(base.clone(), 3, PerturbationDist::Zero);
        let (sa, sb) = (base.sampler().unwrap(), pert.sampler().unwrap());
        let mut r1 = stream(5, 2, Lane::Disorder);
        let mut r2 = stream(5, 2, Lane::Disorder);
        for _ in 0..100 {
            assert_eq!(sa.sample(&mut r1), sb.sample(&mut r2));
        }
        assert!(WeightFamily::exp_gamma(-1.0).validate().is_err());
        assert!(WeightFamily::perturbed(base, 0, PerturbationDist::Zero).validate().is_err());
    }

    #[test]
    fn centered_exp_gamma_moments_match_monte_carlo() {
        for theta in [0.5, 2.0, 50.0] {
            let fam = WeightFamily::exp_gamma(theta).centered();
            let analytic = fam.analytic_moments(6).unwrap().unwrap();
            let (mean, se) = mc_raw_moments(&fam, 6, 1_000_000, 21);
            for n in 0..6 {
                let z = (mean[n] - analytic.moments[n]) / se[n];
                assert!(z.abs() < 4.0, "theta={theta} n={}: {} vs {} ({z} SE)", n + 1, mean[n], analytic.moments[n]);
            }
        }
    }

    #[test]
    fn central_moment_scaling_bracket() {
        for k in 2..=6usize {
            let scaled = |theta: f64| {
                let m = WeightFamily::exp_gamma(theta).centered().analytic_moments(k).unwrap().unwrap();
                m.moments[k - 1].abs() * theta.powi(k.div_ceil(2) as i32)
            };
            let reference = scaled(100.0);
            assert!(reference > 0.0);
            for theta in [1e3, 1e4] {
                let v = scaled(theta);
                assert!(v >= 0.5 * reference && v <= 2.0 * reference, "k={k} theta={theta}: {v} vs {reference}");
            }
        }
    }

    #[test]
    fn required_order_examples() {
        assert_eq!(required_order(0.25).unwrap(), 9);
        assert_eq!(required_order(0.2).unwrap(), 10);
        assert_eq!(required_order(1.0 / 8.0).unwrap(), 15);
        assert!(required_order(0.3).is_err());
        assert!(required_order(0.0).is_err());
        let bound: f64 = 5.0 / (3.0 * 0.25) + 4.0 / 3.0;
        assert!((bound - 8.0).abs() < 1e-14);
    }

    #[test]
    fn self_match_has_zero_gaps() {
        let fam = WeightFamily::exp_gamma(4.0).centered();
        let report = check_moment_matching(&fam, &fam, 5, &DEFAULT_BETA_GRID).unwrap();
        assert!(report.pass);
        assert_eq!(report.mode, MatchMode::Analytic);
        assert!(report.gaps.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn perturbed_exp_gamma_matches_to_order_k() {
        let k = 9;
        let base = WeightFamily::exp_gamma(1.0).centered();
        let pert = WeightFamily::perturbed(base.clone(), k, PerturbationDist::Uniform { half_width: 1.0 });
        let report = check_moment_matching(&base, &pert, k as usize, &DEFAULT_BETA_GRID).unwrap();
        assert!(report.pass, "{report:?}");
        let json = serde_json::to_string(&report).unwrap();
        let back: MatchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        // a k = 1 perturbation breaks the order-9 match
        let bad = WeightFamily::perturbed(base.clone(), 1, PerturbationDist::Rademacher { amplitude: 0.5 });
        let report = check_moment_matching(&base, &bad, k as usize, &DEFAULT_BETA_GRID).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn perturbed_analytic_moments_agree_with_monte_carlo() {
        let base = WeightFamily::exp_gamma(4.0).centered();
        let pert = WeightFamily::perturbed(base, 1, PerturbationDist::Uniform { half_width: 0.8 });
        let analytic = pert.analytic_moments(4).unwrap().unwrap();
        let (mean, se) = mc_raw_moments(&pert, 4, 400_000, 3);
        for n in 0..4 {
            assert!((mean[n] - analytic.moments[n]).abs() < 4.0 * se[n], "n={}", n + 1);
        }
    }

    #[test]
    fn clipped_normal_uses_monte_carlo() {
        let base = WeightFamily::exp_gamma(1.0).centered();
        let pert = WeightFamily::perturbed(base.clone(), 4, PerturbationDist::ClippedNormal { bound: 1.0 });
        assert!(!pert.has_analytic_moments());
        let options = MatchOptions { mc_samples: 200_000, ..MatchOptions::default() };
        let report = check_moment_matching_with(&base, &pert, 4, &[0.2, 0.1], options).unwrap();
        assert_eq!(report.mode, MatchMode::MonteCarlo);
        assert_eq!(report.gap_std_errors.len(), 2);
        assert!(report.pass, "{report:?}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cumulant_moment_round_trip(kappa in proptest::collection::vec(-2.0f64..2.0, 1..=8)) {
                let mu = moments_from_cumulants(&kappa).unwrap();
                let back = cumulants_from_moments(&mu);
                let scale = mu.iter().fold(1.0f64, |a, m| a.max(m.abs()));
                for (a, b) in kappa.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-11 * scale, "{a} vs {b}");
                }
            }

            #[test]
            fn moment_set_low_order_invariants(theta in 0.2f64..100.0) {
                let m = exp_gamma_cumulants(theta, 4, false).unwrap();
                prop_assert!((m.moments[0] - m.cumulants[0]).abs() < 1e-14 * m.cumulants[0].abs().max(1.0));
                let want = m.cumulants[1] + m.cumulants[0].powi(2);
                prop_assert!((m.moments[1] - want).abs() < 1e-12 * want.abs().max(1.0));
            }
        }
    }
}
