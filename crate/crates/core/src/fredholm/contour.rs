//! Piecewise-linear contours discretized with composite Gauss-Legendre rules.

use super::FredholmError;
use crate::quadrature::{composite_rule, graded_breakpoints};
use crate::ComplexPoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContourKind {
    /// `apex + r (-1 +- i tan phi)`, `r >= 0`
    WedgeCv { phi: f64, apex: f64 },
    /// `abscissa + i y`
    VerticalCw { abscissa: f64 },
    /// `e^{+-2 pi i / 3} r`
    AiryWedgeIn,
    /// `shift + e^{+-i pi / 3} r`
    AiryWedgeOut { shift: f64 },
    /// real segment `[a, b]`
    Segment { a: f64, b: f64 },
}

/// Whether quadrature weights are `dz` or `dz / (2 pi i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Plain,
    OverTwoPiI,
}

/// A straight piece `origin + r direction`, `r` over `breakpoints`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub origin: ComplexPoint,
    pub direction: ComplexPoint,
    pub breakpoints: Vec<f64>,
    /// traversed from the far end towards `origin`
    pub inward: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub kind: ContourKind,
    /// largest parameter value `r` on any leg
    pub truncation: f64,
    /// Gauss-Legendre nodes per panel
    pub order: usize,
    pub measure: Measure,
    pub legs: Vec<Leg>,
    pub nodes: Vec<ComplexPoint>,
    /// quadrature weights, direction factor and measure included
    pub weights: Vec<ComplexPoint>,
}

impl ContourSpec {
    pub fn from_legs(kind: ContourKind, legs: Vec<Leg>, order: usize, measure: Measure) -> Self {
        let scale = match measure {
            Measure::Plain => Complex64::new(1.0, 0.0),
            Measure::OverTwoPiI => Complex64::new(0.0, 2.0 * PI).inv(),
        };
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut truncation: f64 = 0.0;
        for leg in &legs {
            let (r, w) = composite_rule(&leg.breakpoints, order);
            truncation = truncation.max(leg.breakpoints.last().copied().unwrap_or(0.0));
            let sign = if leg.inward { -1.0 } else { 1.0 };
            let pieces: Vec<(ComplexPoint, ComplexPoint)> = r
                .iter()
                .zip(&w)
                .map(|(r, w)| (leg.origin + leg.direction * *r, leg.direction * (sign * w) * scale))
                .collect();
            if leg.inward {
                for (z, dz) in pieces.into_iter().rev() {
                    nodes.push(z);
                    weights.push(dz);
                }
            } else {
                for (z, dz) in pieces {
                    nodes.push(z);
                    weights.push(dz);
                }
            }
        }
        ContourSpec { kind, truncation, order, measure, legs, nodes, weights }
    }

    /// Same legs and panels with a different number of nodes per panel.
    pub fn with_order(&self, order: usize) -> Self {
        Self::from_legs(self.kind, self.legs.clone(), order.max(1), self.measure)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Wedge through `apex` opening to the left at angle `phi` from the
    /// negative real axis, measure `dz / (2 pi i)`. Panels start at
    /// `first_width` near the apex and double every two panels up to
    /// `max_width`.
    pub fn wedge_cv(
        apex: f64,
        phi: f64,
        truncation: f64,
        first_width: f64,
        max_width: f64,
        order: usize,
    ) -> Result<Self, FredholmError> {
        if !(phi > 0.0 && phi <= PI / 4.0 + 1e-15) {
            return Err(FredholmError::InvalidParameter(format!("wedge angle {phi} outside (0, pi/4]")));
        }
        check_resolution(truncation, first_width, max_width, order)?;
        let bp = graded_breakpoints(truncation, first_width, max_width, 2);
        let origin = Complex64::new(apex, 0.0);
        let up = Complex64::new(-1.0, phi.tan());
        let legs = vec![
            Leg { origin, direction: up.conj(), breakpoints: bp.clone(), inward: true },
            Leg { origin, direction: up, breakpoints: bp, inward: false },
        ];
        Ok(Self::from_legs(ContourKind::WedgeCv { phi, apex }, legs, order, Measure::OverTwoPiI))
    }

    /// Vertical line `Re z = abscissa`, `|Im z| <= truncation`, measure `dz / (2 pi i)`.
    pub fn vertical_cw(
        abscissa: f64,
        truncation: f64,
        first_width: f64,
        max_width: f64,
        order: usize,
    ) -> Result<Self, FredholmError> {
        check_resolution(truncation, first_width, max_width, order)?;
        let bp = graded_breakpoints(truncation, first_width, max_width, 2);
        let origin = Complex64::new(abscissa, 0.0);
        let legs = vec![
            Leg { origin, direction: Complex64::new(0.0, -1.0), breakpoints: bp.clone(), inward: true },
            Leg { origin, direction: Complex64::new(0.0, 1.0), breakpoints: bp, inward: false },
        ];
        Ok(Self::from_legs(ContourKind::VerticalCw { abscissa }, legs, order, Measure::OverTwoPiI))
    }

    /// `e^{+-2 pi i/3} R^+` truncated at `truncation`, measure `dz / (2 pi i)`.
    pub fn airy_in(truncation: f64, order: usize) -> Result<Self, FredholmError> {
        let bp = airy_breakpoints(truncation, order)?;
        let dir = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        let legs = vec![
            Leg { origin: Complex64::new(0.0, 0.0), direction: dir.conj(), breakpoints: bp.clone(), inward: true },
            Leg { origin: Complex64::new(0.0, 0.0), direction: dir, breakpoints: bp, inward: false },
        ];
        Ok(Self::from_legs(ContourKind::AiryWedgeIn, legs, order, Measure::OverTwoPiI))
    }

    /// `shift + e^{+-i pi/3} R^+` truncated at `truncation`, measure `dz`
    /// (the `1/(2 pi i)` of the kernel integral is applied by the kernel).
    pub fn airy_out(shift: f64, truncation: f64, order: usize) -> Result<Self, FredholmError> {
        let bp = airy_breakpoints(truncation, order)?;
        let dir = Complex64::from_polar(1.0, PI / 3.0);
        let origin = Complex64::new(shift, 0.0);
        let legs = vec![
            Leg { origin, direction: dir.conj(), breakpoints: bp.clone(), inward: true },
            Leg { origin, direction: dir, breakpoints: bp, inward: false },
        ];
        Ok(Self::from_legs(ContourKind::AiryWedgeOut { shift }, legs, order, Measure::Plain))
    }

    /// Real segment `[a, b]` in `panels` equal panels, measure `dx`.
    pub fn segment(a: f64, b: f64, panels: usize, order: usize) -> Result<Self, FredholmError> {
        if !(b > a) || panels == 0 || order == 0 {
            return Err(FredholmError::InvalidParameter("segment needs a < b and a positive resolution".into()));
        }
        let bp: Vec<f64> = (0..=panels).map(|k| (b - a) * k as f64 / panels as f64).collect();
        let legs = vec![Leg { origin: Complex64::new(a, 0.0), direction: Complex64::new(1.0, 0.0), breakpoints: bp, inward: false }];
        Ok(Self::from_legs(ContourKind::Segment { a, b }, legs, order, Measure::Plain))
    }
}

fn check_resolution(truncation: f64, first: f64, max: f64, order: usize) -> Result<(), FredholmError> {
    if !(truncation > 0.0 && first > 0.0 && max >= first && order > 0) || !truncation.is_finite() {
        return Err(FredholmError::InvalidParameter(format!(
            "bad contour resolution: L={truncation}, widths {first}..{max}, order {order}"
        )));
    }
    Ok(())
}

/// Panels at `[0, L/4, L/2, L]`; the cubic exponent varies fastest near 0.
fn airy_breakpoints(truncation: f64, order: usize) -> Result<Vec<f64>, FredholmError> {
    check_resolution(truncation, truncation / 4.0, truncation, order)?;
    Ok(vec![0.0, truncation / 4.0, truncation / 2.0, truncation])
}
