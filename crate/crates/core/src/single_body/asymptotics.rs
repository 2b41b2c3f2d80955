//! Closed-form small-body dipole moment and scattering amplitude.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::shape::ParticleShape;
use crate::em::{plane_wave_curl, rcross, CVec3, PlaneWave, Point, I};

/// `Q = −(∇ × E₀)(x₁) |D|`.
pub fn asymptotic_q(pw: &PlaneWave, shape: &ParticleShape, x1: &Point) -> CVec3 {
    -plane_wave_curl(pw, x1) * Complex64::new(shape.volume(), 0.0)
}

/// Far-field amplitude of a current with total moment `Q`: `(ik/4π) [β, Q]`.
pub fn amplitude_from_q(k: f64, beta: &Point, q: &CVec3) -> CVec3 {
    rcross(beta, q) * (I * k / (4.0 * PI))
}

/// `A(β, α, k) = (k²/4π) [β, [α, 𝓔]] c_D a³`.
pub fn asymptotic_amplitude(pw: &PlaneWave, beta: &Point, shape: &ParticleShape) -> CVec3 {
    let k = pw.k();
    let inner = rcross(&pw.direction(), &pw.amplitude());
    rcross(beta, &inner) * Complex64::new(k * k / (4.0 * PI) * shape.volume(), 0.0)
}
