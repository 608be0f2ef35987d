//! Numerical checks of the steep-descent properties of `G` along the contours.

use super::kernel::g_function;
use super::FredholmError;
use crate::specfun::polygamma_real;
use crate::ComplexPoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Allowance for finite-difference and round-off error in the comparisons.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCheck {
    pub name: String,
    pub samples: usize,
    /// smallest `bound - value` seen (negative means violated)
    pub worst_margin: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

impl DiagnosticCheck {
    fn new(name: &str) -> Self {
        DiagnosticCheck { name: name.into(), samples: 0, worst_margin: f64::INFINITY, violations: Vec::new(), passed: true }
    }

    fn record(&mut self, margin: f64, slack: f64, what: impl FnOnce() -> String) {
        self.samples += 1;
        self.worst_margin = self.worst_margin.min(margin);
        if margin < -slack {
            self.passed = false;
            if self.violations.len() < 20 {
                self.violations.push(what());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub theta: f64,
    pub z_crit: f64,
    pub n: usize,
    pub checks: Vec<DiagnosticCheck>,
    pub all_passed: bool,
}

impl DiagnosticsReport {
    pub fn check(&self, name: &str) -> Option<&DiagnosticCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `r = 10^{k/10}`, `k = -10..=20`: log-spaced on `[0.1, 100]`, hitting 0.1, 1 and 10.
pub fn descent_grid() -> Vec<f64> {
    (-10..=20).map(|k| 10f64.powf(k as f64 / 10.0)).collect()
}

/// Five-point central difference of `f` at `x`.
fn derivative(f: impl Fn(f64) -> Result<f64, FredholmError>, x: f64, h: f64) -> Result<f64, FredholmError> {
    Ok((f(x - 2.0 * h)? - 8.0 * f(x - h)? + 8.0 * f(x + h)? - f(x + 2.0 * h)?) / (12.0 * h))
}

/// Runs every check for `theta`; `n` sets the `w`-line shift `delta / (sigma N^{1/3})`
/// used in the monotonicity check.
pub fn contour_diagnostics(theta: f64, n: usize) -> Result<DiagnosticsReport, FredholmError> {
    if !(theta > 0.0 && theta.is_finite()) || n == 0 {
        return Err(FredholmError::InvalidParameter(format!("theta = {theta}, N = {n}")));
    }
    let zc = theta / 2.0;
    let re_g = |z: ComplexPoint| g_function(z, theta).map(|g| g.re);
    let g_scale = 1.0 + g_function(Complex64::new(zc, 0.0), theta)?.norm();

    // critical point: G' and G'' vanish
    let mut critical = DiagnosticCheck::new("critical_point");
    let h = 1e-2 * zc;
    let g = |x: f64| g_function(Complex64::new(x, 0.0), theta).map(|g| g.re);
    let d1 = derivative(g, zc, h)?;
    let d2 = (-g(zc + 2.0 * h)? + 16.0 * g(zc + h)? - 30.0 * g(zc)? + 16.0 * g(zc - h)? - g(zc - 2.0 * h)?) / (12.0 * h * h);
    // relative to the size of the individual digamma / trigamma terms
    let s1 = 1.0 + 2.0 * crate::specfun::digamma_real(zc)?.abs();
    let s2 = 1.0 + 2.0 * polygamma_real(1, zc)?.abs();
    critical.record(1e-7 * s1 - d1.abs(), 0.0, || format!("G'(z_crit) = {d1:e}"));
    critical.record(1e-7 * s2 - d2.abs(), 0.0, || format!("G''(z_crit) = {d2:e}"));
    let g3 = 2.0 * polygamma_real(2, zc)?;

    // bracket for -G'''(z_crit) - 4/z_crit^3
    let mut bracket = DiagnosticCheck::new("third_derivative_bracket");
    let excess = -g3 - 4.0 / zc.powi(3);
    let lower = 2.0 / (2.0 + zc).powi(2);
    let upper = 2.0 / (zc * zc);
    bracket.record(excess - lower, 1e-12 * lower, || format!("{excess:e} < {lower:e}"));
    bracket.record(upper - excess, 1e-12 * upper, || format!("{excess:e} > {upper:e}"));

    // d/dr Re G(z_crit + r(-1 +- i)) <= -2 r^2 / (1 + z_crit + 2 r)^2
    let mut descent = DiagnosticCheck::new("descent_bound");
    for r in descent_grid() {
        for sign in [1.0, -1.0] {
            let dir = Complex64::new(-1.0, sign);
            let along = |s: f64| re_g(Complex64::new(zc, 0.0) + dir * s);
            let slope = derivative(along, r, r / 50.0)?;
            let bound = -2.0 * r * r / (1.0 + zc + 2.0 * r).powi(2);
            descent.record(bound - slope, SLACK * bound.abs().max(1e-3), || {
                format!("r = {r:.4}, sign {sign}: slope {slope:e} > bound {bound:e}")
            });
        }
    }

    // Re G(z_crit + shift + i y) nondecreasing in y >= 0
    let mut monotone = DiagnosticCheck::new("cw_monotone");
    let sigma_n = (-polygamma_real(2, zc)?).cbrt() * (n as f64).cbrt();
    let delta = (zc / 4.0).min(0.5);
    for shift in [0.0, delta / sigma_n] {
        let mut prev = re_g(Complex64::new(zc + shift, 0.0))?;
        for k in 1..=400 {
            let y = 0.125 * k as f64;
            let cur = re_g(Complex64::new(zc + shift, y))?;
            monotone.record(cur - prev, 1e-12 * g_scale, || format!("shift {shift:.4}, y = {y}: {cur} < {prev}"));
            prev = cur;
        }
    }

    // log|Res_1(v, v)| / N = Re(G(v) - G(v + 1)) at u = e^{-NF}; negative means
    // the residue shrinks as N grows
    let mut residues = DiagnosticCheck::new("residue_decay");
    for k in 0..=236 {
        let r = 1.0 + 0.25 * k as f64;
        for sign in [1.0, -1.0] {
            let v = Complex64::new(zc - r, sign * r);
            let per_n = re_g(v)? - re_g(v + 1.0)?;
            residues.record(-per_n, 0.0, || format!("r = {r}, sign {sign}: log|Res_1|/N = {per_n:e}"));
        }
    }

    let checks = vec![critical, bracket, descent, monotone, residues];
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(DiagnosticsReport { theta, z_crit: zc, n, checks, all_passed })
}
