//! Scattered fields written as superpositions of curl-type point sources,
//! `v(x) = Σ_m [∇ₓ g(x, y_m), V_m]`, and the outgoing-radiation diagnostic.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::em::{green_derivatives, green_gradient_unchecked, rcross, CVec3, Point, I};
use crate::error::{Error, Result};

/// Point sources of a curl-type field. Each source contributes `∇g(x, y) × V`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DipoleSources {
    pub positions: Vec<Point>,
    pub moments: Vec<CVec3>,
}

impl DipoleSources {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn field(&self, k: f64, x: &Point) -> Result<CVec3> {
        let mut acc = CVec3::zeros();
        for (y, v) in self.positions.iter().zip(&self.moments) {
            let d = x - y;
            let r = d.norm();
            if r == 0.0 {
                return Err(Error::CoincidentPoints { distance: 0.0 });
            }
            acc += green_gradient_unchecked(k, &d, r).cross(v);
        }
        Ok(acc)
    }

    /// Field and its derivative along the unit vector `dir`.
    pub fn field_and_derivative(&self, k: f64, x: &Point, dir: &Point) -> Result<(CVec3, CVec3)> {
        let mut v = CVec3::zeros();
        let mut dv = CVec3::zeros();
        for (y, m) in self.positions.iter().zip(&self.moments) {
            let ge = green_derivatives(k, x, y)?;
            v += ge.gradient.cross(m);
            let hd = ge.hessian * dir.map(|c| Complex64::new(c, 0.0));
            dv += hd.cross(m);
        }
        Ok((v, dv))
    }

    /// Far-field amplitude `lim r e^{−ikr} v(rβ)`.
    pub fn far_field_amplitude(&self, k: f64, beta: &Point) -> CVec3 {
        let mut acc = CVec3::zeros();
        for (y, m) in self.positions.iter().zip(&self.moments) {
            let phase = Complex64::from_polar(1.0, -k * beta.dot(y));
            acc += rcross(beta, m) * phase;
        }
        acc * (I * k / (4.0 * PI))
    }
}

/// Deterministic, nearly uniform directions on the unit sphere.
pub fn fibonacci_directions(n: usize) -> Vec<Point> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Point::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiationReport {
    pub radii: Vec<f64>,
    /// `max |r (∂_r v − ik v)|` over each sampling sphere.
    pub defect: Vec<f64>,
    /// Whether the defect strictly decreases with the radius.
    pub decreasing: bool,
}

/// Samples `r (∂v/∂r − ik v)` on spheres about `center`.
pub fn radiation_check(
    sources: &DipoleSources,
    k: f64,
    center: &Point,
    radii: &[f64],
    samples: usize,
) -> Result<RadiationReport> {
    let extent = sources
        .positions
        .iter()
        .map(|p| (p - center).norm())
        .fold(0.0, f64::max);
    if let Some(r) = radii.iter().find(|r| **r <= extent) {
        return Err(Error::InvalidInput(format!(
            "sampling radius {r} does not enclose the sources (extent {extent})"
        )));
    }
    let dirs = fibonacci_directions(samples.max(1));
    let mut defect = Vec::with_capacity(radii.len());
    for &r in radii {
        let worst = dirs
            .par_iter()
            .map(|d| {
                let x = center + d * r;
                let (v, dv) = sources.field_and_derivative(k, &x, d)?;
                Ok(r * (dv - v * (I * k)).norm())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        defect.push(worst);
    }
    let decreasing = defect.windows(2).all(|w| w[1] < w[0]);
    Ok(RadiationReport {
        radii: radii.to_vec(),
        defect,
        decreasing,
    })
}
