//! `F_GUE(t)` as a Fredholm determinant, in two independent forms.
//!
//! Contour form: for `v, v'` on `e^{+-2 pi i/3} R^+` (measure `dv / (2 pi i)`)
//!
//! ```text
//! K(v, v') = 1/(2 pi i) int_{1/2 + e^{+-i pi/3} R^+} exp(-v^3/3 + t v) / exp(-w^3/3 + t w)
//!            dw / ((v - w)(w - v'))
//! ```
//!
//! and `F_GUE(t) = det(I + K)`. Classical form: `det(I - K_Ai)` on `L^2(t, inf)`.

use super::{nystrom_det, result_from_pair, ContourSpec, FredholmError, FredholmResult, KernelRows};
use crate::quadrature::gauss_legendre;
use crate::specfun::airy_pair;
use crate::ComplexPoint;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Truncation of both Airy contours; `exp(-L^3/3)` is far below round-off.
pub const AIRY_TRUNCATION: f64 = 6.0;
/// Horizontal offset of the `w` wedge.
pub const AIRY_SHIFT: f64 = 0.5;
/// Gauss-Legendre nodes per panel for the contour form.
pub const AIRY_ORDER: usize = 20;
/// Quadrature nodes for the classical form.
pub const CLASSICAL_NODES: usize = 80;
/// Supported range of `t`.
pub const FGUE_RANGE: (f64, f64) = (-6.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FgueMode {
    Contour,
    AiryOracle,
}

/// Contour-form Airy kernel with its `w` contour discretized once.
#[derive(Debug, Clone)]
pub struct AiryKernel {
    pub t: f64,
    pub w_contour: ContourSpec,
    /// `exp(w^3/3 - t w) dw / (2 pi i)` at the `w` nodes
    w_factor: Vec<ComplexPoint>,
}

impl AiryKernel {
    pub fn new(t: f64, order: usize) -> Result<Self, FredholmError> {
        if !t.is_finite() {
            return Err(FredholmError::InvalidParameter(format!("t = {t}")));
        }
        let w_contour = ContourSpec::airy_out(AIRY_SHIFT, AIRY_TRUNCATION, order)?;
        let two_pi_i = Complex64::new(0.0, 2.0 * PI);
        let w_factor = w_contour
            .nodes
            .iter()
            .zip(&w_contour.weights)
            .map(|(w, dw)| (w * w * w / 3.0 - t * w).exp() * dw / two_pi_i)
            .collect();
        Ok(AiryKernel { t, w_contour, w_factor })
    }
}

impl KernelRows for AiryKernel {
    fn row(&self, v: ComplexPoint, targets: &[ComplexPoint]) -> Result<Vec<ComplexPoint>, FredholmError> {
        let a = (-v * v * v / 3.0 + self.t * v).exp();
        let coeff: Vec<ComplexPoint> =
            self.w_contour.nodes.iter().zip(&self.w_factor).map(|(w, f)| a * f / (v - w)).collect();
        Ok(targets
            .iter()
            .map(|vp| self.w_contour.nodes.iter().zip(&coeff).map(|(w, c)| c / (w - vp)).sum())
            .collect())
    }
}

/// Pointwise contour-form kernel using the given `w` discretization.
pub fn airy_contour_kernel(v: ComplexPoint, v_prime: ComplexPoint, t: f64, w_contour: &ContourSpec) -> ComplexPoint {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let a = (-v * v * v / 3.0 + t * v).exp();
    w_contour
        .nodes
        .iter()
        .zip(&w_contour.weights)
        .map(|(w, dw)| a * (w * w * w / 3.0 - t * w).exp() * dw / ((v - w) * (w - v_prime) * two_pi_i))
        .sum()
}

/// Contour-form determinant at `order` nodes per panel, with the
/// convergence trace taken at `order / 2` on both contours.
pub fn fgue_contour(t: f64, order: usize, workers: usize) -> Result<FredholmResult, FredholmError> {
    let half_order = (order / 2).max(1);
    let v_full = ContourSpec::airy_in(AIRY_TRUNCATION, order)?;
    let v_half = v_full.with_order(half_order);
    let full = nystrom_det(&AiryKernel::new(t, order)?, &v_full, workers)?;
    let half = nystrom_det(&AiryKernel::new(t, half_order)?, &v_half, workers)?;
    result_from_pair(full, half, &v_full, &v_half)
}

/// `det(I - K_Ai)` on `[s, min(s + 12, 15)]` with `nodes` Gauss-Legendre
/// points and the symmetric `sqrt(w_i) K sqrt(w_j)` form.
pub fn fgue_classical(s: f64, nodes: usize) -> Result<f64, FredholmError> {
    if !s.is_finite() || nodes == 0 {
        return Err(FredholmError::InvalidParameter(format!("s = {s}, nodes = {nodes}")));
    }
    let hi = (s + 12.0).min(15.0).max(s + 1.0);
    let (x, w) = gauss_legendre(nodes);
    let half = 0.5 * (hi - s);
    let xs: Vec<f64> = x.iter().map(|x| s + half * (x + 1.0)).collect();
    let sw: Vec<f64> = w.iter().map(|w| (w * half).sqrt()).collect();
    let mut ai = Vec::with_capacity(nodes);
    let mut aip = Vec::with_capacity(nodes);
    for &xi in &xs {
        let (a, b) = airy_pair(xi)?;
        ai.push(a);
        aip.push(b);
    }
    let m = DMatrix::from_fn(nodes, nodes, |i, j| {
        let k = if i == j {
            aip[i] * aip[i] - xs[i] * ai[i] * ai[i]
        } else {
            (ai[i] * aip[j] - aip[i] * ai[j]) / (xs[i] - xs[j])
        };
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - sw[i] * k * sw[j]
    });
    Ok(m.lu().determinant())
}

/// `F_GUE(t)` for `t` in [`FGUE_RANGE`].
pub fn fgue(t: f64, mode: FgueMode) -> Result<f64, FredholmError> {
    if !(t >= FGUE_RANGE.0 && t <= FGUE_RANGE.1) {
        return Err(FredholmError::InvalidParameter(format!(
            "t = {t} outside [{}, {}]",
            FGUE_RANGE.0, FGUE_RANGE.1
        )));
    }
    match mode {
        FgueMode::Contour => fgue_contour(t, AIRY_ORDER, 1)?.real_value(),
        FgueMode::AiryOracle => fgue_classical(t, CLASSICAL_NODES),
    }
}
