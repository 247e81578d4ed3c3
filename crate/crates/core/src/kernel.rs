//! Fundamental solution `G(s, r) = e^{−s|r|} / (4π|r|)` of `s² − Δ`.

use crate::geom::{CVec3, Vec3};
use crate::C64;
use std::f64::consts::PI;
use thiserror::Error;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel evaluated at r = 0; route coincident points through singular quadrature")]
    Singular,
    #[error("frequency s = {0} must have positive real part")]
    NonPositiveFrequency(C64),
}

/// A Laplace-domain frequency with `Re s > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexFrequency(C64);

impl ComplexFrequency {
    pub fn new(s: C64) -> Result<Self, KernelError> {
        if s.re > 0.0 && s.im.is_finite() {
            Ok(ComplexFrequency(s))
        } else {
            Err(KernelError::NonPositiveFrequency(s))
        }
    }

    pub fn value(self) -> C64 {
        self.0
    }
}

pub fn green(s: C64, r: Vec3) -> Result<C64, KernelError> {
    let d = r.norm();
    if d == 0.0 {
        return Err(KernelError::Singular);
    }
    Ok(green_at(s, d))
}

/// Gradient with respect to `r`: `−(s|r| + 1) e^{−s|r|} / (4π|r|³) · r`.
pub fn green_grad(s: C64, r: Vec3) -> Result<CVec3, KernelError> {
    let d = r.norm();
    if d == 0.0 {
        return Err(KernelError::Singular);
    }
    let (_, g) = green_and_radial(s, d);
    Ok(CVec3::from_real(r, g))
}

#[inline]
fn exp_neg(s: C64, d: f64) -> C64 {
    let (sin, cos) = (s.im * d).sin_cos();
    let m = (-s.re * d).exp();
    C64::new(m * cos, -m * sin)
}

/// `G(s, d)` for a distance `d > 0`.
#[inline]
pub fn green_at(s: C64, d: f64) -> C64 {
    exp_neg(s, d) * (INV_4PI / d)
}

/// `(G, g)` with `∇G(r) = g · r` at distance `d = |r| > 0`.
#[inline]
pub fn green_and_radial(s: C64, d: f64) -> (C64, C64) {
    let inv = 1.0 / d;
    let g = exp_neg(s, d) * (INV_4PI * inv);
    let radial = -g * (s * d + 1.0) * (inv * inv);
    (g, radial)
}
