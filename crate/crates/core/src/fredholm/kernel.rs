//! The log-gamma kernel on the wedge `C_v` and its Fredholm determinant.
//!
//! For `v, v'` on `C_v`
//!
//! ```text
//! K(v, v') = 1/(2 pi i) int_{C_w} -pi / sin(pi (w - v)) * E(v, w) / (w - v') dw
//!          + sum_{j=1}^{q(v)} (-1)^j E(v, v + j) / (v + j - v')
//! E(v, w)  = exp(N (lnG(v) - lnG(theta - v) - lnG(w) + lnG(theta - w)) + (w - v) log u)
//! ```
//!
//! where `C_w` is the vertical line `Re w = z_crit + delta'` and `q(v)` counts
//! the sine poles `v + j` to the left of it.

use super::{fredholm_det, ContourSpec, FredholmError, FredholmResult, KernelRows};
use crate::polymer::FreeEnergyScale;
use crate::quadrature::gauss_legendre;
use crate::specfun::{digamma_real, ln_sin_pi, log_gamma};
use crate::ComplexPoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest `v`-contour truncation; hitting it is reported as a warning.
pub const MAX_TRUNCATION: f64 = 60.0;
/// Candidate abscissae for the per-row `w`-line, spread over `[delta/2, delta]`.
const ABSCISSA_CANDIDATES: usize = 26;
/// Minimum allowed distance between a `w` node and a sine pole.
const COLLISION_DISTANCE: f64 = 1e-8;
/// `w` nodes whose log-magnitude is this far below the row maximum are dropped.
const PRUNE_LOG_MARGIN: f64 = 45.0;

/// `G(z) = log Gamma(z) - log Gamma(theta - z) - 2 Psi(theta/2) z`.
pub fn g_function(z: ComplexPoint, theta: f64) -> Result<ComplexPoint, FredholmError> {
    let psi = digamma_real(theta / 2.0)?;
    Ok(log_gamma(z)? - log_gamma(Complex64::new(theta, 0.0) - z)? - 2.0 * psi * z)
}

/// `u` held through its logarithm; `exp(log u)` may underflow for large `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogU {
    pub ln: ComplexPoint,
}

impl LogU {
    pub fn from_ln(ln: ComplexPoint) -> Self {
        LogU { ln }
    }

    pub fn from_u(u: ComplexPoint) -> Self {
        LogU { ln: u.ln() }
    }

    pub fn u(&self) -> ComplexPoint {
        self.ln.exp()
    }
}

/// `u = exp(-N F - t sigma N^{1/3})`.
pub fn u_of_t(t: f64, scale: &FreeEnergyScale) -> LogU {
    LogU::from_ln(Complex64::new(-(scale.n as f64) * scale.f - t * scale.tilde_sigma, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub n: usize,
    pub theta: f64,
    pub z_crit: f64,
    pub delta: f64,
    pub log_u: LogU,
    /// set when `u` came from [`u_of_t`]
    pub t: Option<f64>,
}

impl KernelParams {
    /// Default `delta = min(z_crit/4, 1/2)`.
    pub fn new(n: usize, theta: f64, log_u: LogU) -> Result<Self, FredholmError> {
        let z_crit = theta / 2.0;
        let p = KernelParams { n, theta, z_crit, delta: (z_crit / 4.0).min(0.5), log_u, t: None };
        p.validate()?;
        Ok(p)
    }

    pub fn at_t(n: usize, theta: f64, t: f64) -> Result<Self, FredholmError> {
        let scale = FreeEnergyScale::new(theta, n)
            .map_err(|e| FredholmError::InvalidParameter(format!("free-energy scale: {e}")))?;
        let mut p = Self::new(n, theta, u_of_t(t, &scale))?;
        p.t = Some(t);
        Ok(p)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self, FredholmError> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), FredholmError> {
        let bad = |m: String| Err(FredholmError::InvalidParameter(m));
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad(format!("theta = {} must be positive", self.theta));
        }
        if (self.z_crit - self.theta / 2.0).abs() > 1e-12 * self.theta {
            return bad("z_crit must equal theta/2".into());
        }
        if !(self.delta > 0.0 && self.delta <= self.z_crit / 2.0) {
            return bad(format!("delta = {} outside (0, z_crit/2]", self.delta));
        }
        if !self.log_u.ln.is_finite() || self.log_u.ln.im.abs() >= PI / 2.0 {
            return bad(format!("need Re(u) > 0, got log u = {}", self.log_u.ln));
        }
        Ok(())
    }

    /// `log u + N F`, the linear coefficient left after removing `N G`.
    pub fn centered_log_u(&self) -> Result<ComplexPoint, FredholmError> {
        let f = -2.0 * digamma_real(self.z_crit)?;
        Ok(self.log_u.ln + self.n as f64 * f)
    }
}

/// `q = floor(abscissa - Re v)`, clamped at zero; with `abscissa = z_crit + delta`.
pub fn residue_count(v: ComplexPoint, abscissa: f64) -> usize {
    (abscissa - v.re).floor().max(0.0) as usize
}

fn log_e_v(v: ComplexPoint, p: &KernelParams) -> Result<ComplexPoint, FredholmError> {
    let n = p.n as f64;
    Ok(n * (log_gamma(v)? - log_gamma(p.theta - v)?) - v * p.log_u.ln)
}

fn log_e_w(w: ComplexPoint, p: &KernelParams) -> Result<ComplexPoint, FredholmError> {
    let n = p.n as f64;
    Ok(-n * (log_gamma(w)? - log_gamma(p.theta - w)?) + w * p.log_u.ln)
}

/// `(-1)^j E(v, v + j)`, the coefficient of `1/(v + j - v')` in `K`.
pub fn residue(j: usize, v: ComplexPoint, p: &KernelParams) -> Result<ComplexPoint, FredholmError> {
    let vj = v + j as f64;
    let n = p.n as f64;
    let log_mag = n * (log_gamma(v)? - log_gamma(vj)? + log_gamma(p.theta - vj)? - log_gamma(p.theta - v)?)
        + j as f64 * p.log_u.ln;
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * log_mag.exp())
}

/// Settings for the discretization of both contours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Gauss-Legendre nodes per panel on `C_v`; the convergence check halves it
    pub order: usize,
    /// nodes per panel on the `w`-lines
    pub w_order: usize,
    /// widest panel on `C_v`
    pub max_width: f64,
    /// widest panel on the `w`-lines
    pub w_max_width: f64,
    /// wedge half-angle
    pub phi: f64,
    /// fixed `C_v` truncation; chosen from the decay envelope when `None`
    pub truncation: Option<f64>,
    /// target size of the discarded tail
    pub tol: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { order: 16, w_order: 16, max_width: 1.0, w_max_width: 1.0, phi: PI / 4.0, truncation: None, tol: 1e-12 }
    }
}

/// Lower bound for `Re G(z_crit) - Re G(z(r))` along `z(r) = z_crit + r(-1 +- i)`,
/// from integrating `d/dr Re G <= -2r^2/(1 + z_crit + 2r)^2`.
pub fn descent_envelope(r: f64, z_crit: f64) -> f64 {
    let a = 1.0 + z_crit;
    0.25 * (2.0 * r - 2.0 * a * ((a + 2.0 * r) / a).ln() - a * a / (a + 2.0 * r) + a)
}

/// Smallest `L` (step 1/4) with `-N H(L) + L (Re c + tan(phi) |Im c|) <= ln(tol) - 10`,
/// where `c = log u + N F`. Returns `(L, capped)`.
pub fn truncation_from_envelope(n: usize, z_crit: f64, c: ComplexPoint, phi: f64, tol: f64) -> (f64, bool) {
    let target = tol.ln() - 10.0;
    let slope = c.re + phi.tan() * c.im.abs();
    let mut r = 1.0;
    while r <= MAX_TRUNCATION {
        if -(n as f64) * descent_envelope(r, z_crit) + r * slope <= target {
            return (r, false);
        }
        r += 0.25;
    }
    (MAX_TRUNCATION, true)
}

/// One row's integration line `Re w = abscissa` with the `v`-dependent part
/// of the integrand folded into `coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct WLine {
    pub abscissa: f64,
    pub nodes: Vec<ComplexPoint>,
    /// `-pi/sin(pi(w - v)) E(v, w) dw / (2 pi i)` at each node
    pub coefficients: Vec<ComplexPoint>,
    /// `(-1)^j E(v, v + j)` for `j = 1..=q`
    pub residues: Vec<ComplexPoint>,
    // split copies for the inner loop of `evaluate`
    heights: Vec<f64>,
    coeff_re: Vec<f64>,
    coeff_im: Vec<f64>,
}

impl WLine {
    pub fn build(v: ComplexPoint, p: &KernelParams, res: &Resolution) -> Result<Self, FredholmError> {
        // keep the line away from the sine poles v + j
        let mut best = (-1.0, p.delta);
        for k in 0..ABSCISSA_CANDIDATES {
            let d = p.delta * (0.5 + 0.5 * k as f64 / (ABSCISSA_CANDIDATES - 1) as f64);
            let s = p.z_crit + d - v.re;
            let dist = (s - s.round()).abs();
            if dist > best.0 {
                best = (dist, d);
            }
        }
        let (pole_gap, shift) = best;
        let abscissa = p.z_crit + shift;

        // |u^{w}| and the sine decay together give exp(-(pi - |arg u|) |Im w - Im v|)
        let half_width = 40.0 / (PI - p.log_u.ln.im.abs());
        let lo = v.im.min(0.0) - half_width;
        let hi = v.im.max(0.0) + half_width;
        let mut bp = Vec::new();
        let mut y = lo;
        while y < hi {
            bp.push(y);
            y += res.w_max_width;
        }
        bp.push(hi);
        for (centre, first) in [(v.im, pole_gap / 2.0), (0.0, shift / 2.0)] {
            let mut h = first;
            while h < res.w_max_width {
                bp.push(centre - h);
                bp.push(centre + h);
                h *= 2.0;
            }
            bp.push(centre);
        }
        bp.retain(|y| *y >= lo && *y <= hi);
        bp.sort_by(|a, b| a.total_cmp(b));
        bp.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let (gx, gw) = gauss_legendre(res.w_order);
        let lv = log_e_v(v, p)?;
        let log_minus_pi = Complex64::new(PI.ln(), PI);
        let mut nodes = Vec::new();
        let mut logs = Vec::new();
        let mut dys = Vec::new();
        for pair in bp.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            for (x, wt) in gx.iter().zip(&gw) {
                let w = Complex64::new(abscissa, a + half * (x + 1.0));
                let to_pole = w - v;
                if (to_pole - to_pole.re.round()).norm() < COLLISION_DISTANCE {
                    return Err(FredholmError::ContourCollision { distance: (to_pole - to_pole.re.round()).norm() });
                }
                let log_i = lv + log_e_w(w, p)? + log_minus_pi - ln_sin_pi(to_pole);
                nodes.push(w);
                logs.push(log_i);
                dys.push(wt * half);
            }
        }
        let peak = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        // dw / (2 pi i) = dy / (2 pi) on a vertical line
        let mut kept_nodes = Vec::with_capacity(nodes.len());
        let mut coefficients = Vec::with_capacity(nodes.len());
        for ((w, l), dy) in nodes.into_iter().zip(logs).zip(dys) {
            if l.re >= peak - PRUNE_LOG_MARGIN {
                kept_nodes.push(w);
                coefficients.push(l.exp() * (dy / (2.0 * PI)));
            }
        }

        let q = residue_count(v, abscissa);
        let mut residues = Vec::with_capacity(q);
        for j in 1..=q {
            let lr = lv + log_e_w(v + j as f64, p)?;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            residues.push(sign * lr.exp());
        }
        Ok(WLine {
            abscissa,
            heights: kept_nodes.iter().map(|w| w.im).collect(),
            coeff_re: coefficients.iter().map(|a| a.re).collect(),
            coeff_im: coefficients.iter().map(|a| a.im).collect(),
            nodes: kept_nodes,
            coefficients,
            residues,
        })
    }

    /// `K(v, v')` for the `v` this line was built for.
    pub fn evaluate(&self, v: ComplexPoint, target: ComplexPoint) -> ComplexPoint {
        // all nodes share the real part, so a / (w - target) = a conj(d) / |d|^2
        // with d = dx + i (y_k - target.im)
        let dx = self.abscissa - target.re;
        let dx2 = dx * dx;
        // independent lanes so the sum is not latency bound
        const LANES: usize = 4;
        let mut re = [0.0; LANES];
        let mut im = [0.0; LANES];
        let ys = self.heights.chunks_exact(LANES);
        let ars = self.coeff_re.chunks_exact(LANES);
        let ais = self.coeff_im.chunks_exact(LANES);
        let tail = ys.remainder().iter().zip(ars.remainder()).zip(ais.remainder());
        for ((y, ar), ai) in ys.zip(ars).zip(ais) {
            for l in 0..LANES {
                let dy = y[l] - target.im;
                let inv = 1.0 / (dx2 + dy * dy);
                re[l] += (ar[l] * dx + ai[l] * dy) * inv;
                im[l] += (ai[l] * dx - ar[l] * dy) * inv;
            }
        }
        for ((y, ar), ai) in tail {
            let dy = y - target.im;
            let inv = 1.0 / (dx2 + dy * dy);
            re[0] += (ar * dx + ai * dy) * inv;
            im[0] += (ai * dx - ar * dy) * inv;
        }
        let (re, im) = (re.iter().sum::<f64>(), im.iter().sum::<f64>());
        let mut sum = Complex64::new(re, im);
        for (j, r) in self.residues.iter().enumerate() {
            sum += r / (v + (j + 1) as f64 - target);
        }
        sum
    }
}

/// Row evaluator for the log-gamma kernel.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceKernel {
    pub params: KernelParams,
    pub resolution: Resolution,
}

impl LaplaceKernel {
    pub fn new(params: KernelParams, resolution: Resolution) -> Result<Self, FredholmError> {
        params.validate()?;
        Ok(LaplaceKernel { params, resolution })
    }

    pub fn kernel(&self, v: ComplexPoint, v_prime: ComplexPoint) -> Result<ComplexPoint, FredholmError> {
        Ok(WLine::build(v, &self.params, &self.resolution)?.evaluate(v, v_prime))
    }

    /// The wedge `C_v` through `z_crit` and its truncation, with a flag set
    /// when the truncation hit [`MAX_TRUNCATION`].
    pub fn v_contour(&self) -> Result<(ContourSpec, bool), FredholmError> {
        let p = &self.params;
        let r = &self.resolution;
        let (length, capped) = match r.truncation {
            Some(l) => (l, false),
            None => truncation_from_envelope(p.n, p.z_crit, p.centered_log_u()?, r.phi, r.tol),
        };
        // the integrand varies on the scale 1/(sigma N^{1/3}) near the apex
        let sigma = (-crate::specfun::polygamma_real(2, p.z_crit)?).cbrt();
        let first = (1.0 / (sigma * (p.n as f64).cbrt())).min(0.5 * r.max_width);
        let c = ContourSpec::wedge_cv(p.z_crit, r.phi, length, first, r.max_width, r.order)?;
        Ok((c, capped))
    }
}

impl KernelRows for LaplaceKernel {
    fn row(&self, v: ComplexPoint, targets: &[ComplexPoint]) -> Result<Vec<ComplexPoint>, FredholmError> {
        let line = WLine::build(v, &self.params, &self.resolution)?;
        Ok(targets.iter().map(|t| line.evaluate(v, *t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    pub resolution: Resolution,
    /// allow `N < 9`
    pub force: bool,
    pub workers: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions { resolution: Resolution::default(), force: false, workers: 0 }
    }
}

/// `det(I + K)` on `C_v`, which equals `E[exp(-u Z)]` for the log-gamma
/// polymer with `N >= 9`. For real `u` the value is checked to be real.
pub fn laplace_transform(params: &KernelParams, opts: &LaplaceOptions) -> Result<FredholmResult, FredholmError> {
    params.validate()?;
    let mut warnings = Vec::new();
    if params.n < 9 {
        if !opts.force {
            return Err(FredholmError::SmallN(params.n));
        }
        warnings.push(format!("N = {} is below 9; the determinant identity is not guaranteed", params.n));
    }
    let kernel = LaplaceKernel::new(*params, opts.resolution)?;
    let (contour, capped) = kernel.v_contour()?;
    if capped {
        warnings.push(format!("v-contour truncation capped at L = {MAX_TRUNCATION}"));
    }
    let mut result = fredholm_det(&kernel, &contour, opts.workers)?;
    if params.log_u.ln.im == 0.0 {
        result.real_value()?;
    }
    result.warnings.extend(warnings);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexPoint {
        Complex64::new(re, im)
    }

    #[test]
    fn g_is_odd_about_the_critical_point() {
        for theta in [0.5, 2.0, 50.0] {
            let zc = c(theta / 2.0, 0.0);
            let g0 = g_function(zc, theta).unwrap();
            for w in [c(0.1, 0.3), c(-0.2, 1.7), c(0.05, -4.0)] {
                let s = g_function(zc + w, theta).unwrap() + g_function(zc - w, theta).unwrap();
                assert!((s - 2.0 * g0).norm() < 1e-10, "theta {theta}, w {w}");
            }
        }
    }

    #[test]
    fn residue_count_examples() {
        assert_eq!(residue_count(c(5.0, 0.3), 6.0), 1);
        assert_eq!(residue_count(c(5.5, -2.0), 6.0), 0);
        assert_eq!(residue_count(c(9.0, 0.0), 6.0), 0);
        assert_eq!(residue_count(c(-3.2, 1.0), 1.25), 4);
    }

    #[test]
    fn first_residue_matches_product_form() {
        let p = KernelParams::new(9, 2.0, LogU::from_ln(c(-3.1, 0.2))).unwrap();
        for v in [c(-0.5, 1.5), c(-2.0, -3.0), c(0.3, 0.7)] {
            let direct = -(1.0 / (v * (p.theta - v - 1.0))).powu(9) * p.log_u.u();
            let r = residue(1, v, &p).unwrap();
            assert!((r - direct).norm() <= 1e-12 * direct.norm());
            // and the line builder uses the same coefficient
            let line = WLine::build(v, &p, &Resolution::default()).unwrap();
            if !line.residues.is_empty() {
                assert!((line.residues[0] - direct).norm() <= 1e-12 * direct.norm());
            }
        }
    }

    #[test]
    fn kernel_is_conjugate_symmetric() {
        let p = KernelParams::at_t(9, 2.0, 0.5).unwrap();
        let k = LaplaceKernel::new(p, Resolution::default()).unwrap();
        for (v, vp) in [(c(0.2, 0.8), c(-1.0, 2.0)), (c(-3.0, 4.0), c(0.9, -0.1))] {
            let a = k.kernel(v, vp).unwrap();
            let b = k.kernel(v.conj(), vp.conj()).unwrap();
            assert!((a - b.conj()).norm() < 1e-13 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(KernelParams::new(9, 2.0, LogU::from_ln(c(0.0, 2.0))).is_err());
        let p = KernelParams::new(9, 2.0, LogU::from_ln(c(-1.0, 0.0))).unwrap();
        assert_eq!(p.delta, 0.25);
        assert!(p.with_delta(0.6).is_err());
        assert!(p.with_delta(0.0).is_err());
        assert!(p.with_delta(0.5).is_ok());
    }

    #[test]
    fn envelope_truncation_grows_with_slope() {
        let (l0, cap0) = truncation_from_envelope(9, 1.0, c(0.0, 0.0), PI / 4.0, 1e-12);
        let (l1, _) = truncation_from_envelope(9, 1.0, c(2.0, 0.0), PI / 4.0, 1e-12);
        assert!(!cap0 && l0 > 5.0 && l1 > l0);
        let (_, cap) = truncation_from_envelope(1, 1.0, c(5.0, 0.0), PI / 4.0, 1e-12);
        assert!(cap);
    }

    #[test]
    fn small_n_needs_force() {
        let p = KernelParams::at_t(4, 2.0, 0.0).unwrap();
        assert_eq!(laplace_transform(&p, &LaplaceOptions::default()).unwrap_err(), FredholmError::SmallN(4));
    }
}
