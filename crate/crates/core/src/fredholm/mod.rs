//! Fredholm determinants on complex contours.
//!
//! * the log-gamma kernel on the wedge `C_v` with its `w`-integral and sine
//!   residues, whose determinant is the Laplace transform `E[exp(-u Z)]`;
//! * the Airy kernel in contour form, whose determinant is `F_GUE(t)`, and
//!   the classical half-line Airy determinant used as an oracle;
//! * steep-descent diagnostics for the function `G`.
//!
//! Determinants are Nyström approximations `det(delta_ij + K(v_i, v_j) w_j)`.
//! Contour weights for kernels acting on `C_v` carry the measure
//! `dv / (2 pi i)`.

mod airy;
mod contour;
mod diagnostics;
mod kernel;

pub use airy::{
    airy_contour_kernel, fgue, fgue_classical, fgue_contour, AiryKernel, FgueMode, AIRY_ORDER, AIRY_SHIFT,
    AIRY_TRUNCATION, CLASSICAL_NODES, FGUE_RANGE,
};
pub use contour::{ContourKind, ContourSpec, Leg, Measure};
pub use diagnostics::{contour_diagnostics, DiagnosticCheck, DiagnosticsReport};
pub use kernel::{
    descent_envelope, g_function, laplace_transform, residue, residue_count, truncation_from_envelope, u_of_t,
    KernelParams, LaplaceKernel, LaplaceOptions, LogU, Resolution, WLine, MAX_TRUNCATION,
};

use crate::parallel::map_indexed;
use crate::specfun::SpecError;
use crate::ComplexPoint;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted change between the half- and full-resolution determinants.
pub const CONVERGENCE_LIMIT: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FredholmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("determinant did not converge: |det_m - det_(m/2)| = {gap:e} > {limit:e}")]
    NonConvergence { gap: f64, limit: f64 },
    #[error("imaginary part {imag:e} exceeds the tolerance {allowed:e} for a real determinant")]
    ImaginaryPart { imag: f64, allowed: f64 },
    #[error("w-node within {distance:e} of a sine pole")]
    ContourCollision { distance: f64 },
    #[error("kernel produced a non-finite value at v = {0}")]
    NonFiniteKernel(ComplexPoint),
    #[error("N = {0} is below 9; pass force to evaluate anyway")]
    SmallN(usize),
    #[error(transparent)]
    Special(#[from] SpecError),
}

/// Kernel evaluated one row at a time: `K(v, v'_j)` for all targets.
pub trait KernelRows: Sync {
    fn row(&self, v: ComplexPoint, targets: &[ComplexPoint]) -> Result<Vec<ComplexPoint>, FredholmError>;
}

/// Adapter for a pointwise kernel `K(v, v')`.
pub struct PointKernel<F>(pub F);

impl<F> KernelRows for PointKernel<F>
where
    F: Fn(ComplexPoint, ComplexPoint) -> ComplexPoint + Sync,
{
    fn row(&self, v: ComplexPoint, targets: &[ComplexPoint]) -> Result<Vec<ComplexPoint>, FredholmError> {
        Ok(targets.iter().map(|t| (self.0)(v, *t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetMode {
    Nystrom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub half_nodes: usize,
    pub half: ComplexPoint,
    pub full_nodes: usize,
    pub full: ComplexPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmResult {
    pub value: ComplexPoint,
    pub nodes: usize,
    pub truncation: f64,
    pub mode: DetMode,
    pub trace: ConvergenceTrace,
    /// `|det_m - det_(m/2)|`
    pub gap: f64,
    pub warnings: Vec<String>,
}

impl FredholmResult {
    /// Real part, after checking that the imaginary part is at the level of
    /// the discretization error (or round-off).
    pub fn real_value(&self) -> Result<f64, FredholmError> {
        let allowed = (10.0 * self.gap).max(1e-10);
        if self.value.im.abs() > allowed {
            return Err(FredholmError::ImaginaryPart { imag: self.value.im, allowed });
        }
        Ok(self.value.re)
    }
}

/// `det(delta_ij + K(v_i, v_j) w_j)` over the contour nodes.
pub fn nystrom_det<K: KernelRows + ?Sized>(
    kernel: &K,
    contour: &ContourSpec,
    workers: usize,
) -> Result<ComplexPoint, FredholmError> {
    let m = contour.len();
    if m == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let rows = map_indexed(workers, m, |i| kernel.row(contour.nodes[i], &contour.nodes));
    let mut data = Vec::with_capacity(m * m);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (j, k) in row.iter().enumerate() {
            if !k.is_finite() {
                return Err(FredholmError::NonFiniteKernel(contour.nodes[i]));
            }
            let delta = if i == j { 1.0 } else { 0.0 };
            data.push(Complex64::new(delta, 0.0) + k * contour.weights[j]);
        }
    }
    let matrix = DMatrix::from_row_slice(m, m, &data);
    Ok(matrix.lu().determinant())
}

/// Nyström determinant at the contour's resolution and at half the nodes
/// per panel; fails if the two differ by more than [`CONVERGENCE_LIMIT`].
pub fn fredholm_det<K: KernelRows + ?Sized>(
    kernel: &K,
    contour: &ContourSpec,
    workers: usize,
) -> Result<FredholmResult, FredholmError> {
    let half_contour = contour.with_order(contour.order / 2);
    let full = nystrom_det(kernel, contour, workers)?;
    let half = nystrom_det(kernel, &half_contour, workers)?;
    result_from_pair(full, half, contour, &half_contour)
}

pub(crate) fn result_from_pair(
    full: ComplexPoint,
    half: ComplexPoint,
    contour: &ContourSpec,
    half_contour: &ContourSpec,
) -> Result<FredholmResult, FredholmError> {
    let gap = (full - half).norm();
    if !(gap <= CONVERGENCE_LIMIT) {
        return Err(FredholmError::NonConvergence { gap, limit: CONVERGENCE_LIMIT });
    }
    Ok(FredholmResult {
        value: full,
        nodes: contour.len(),
        truncation: contour.truncation,
        mode: DetMode::Nystrom,
        trace: ConvergenceTrace { half_nodes: half_contour.len(), half, full_nodes: contour.len(), full },
        gap,
        warnings: Vec::new(),
    })
}
