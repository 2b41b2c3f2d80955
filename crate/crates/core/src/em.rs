//! Complex vector algebra, the free-space Helmholtz kernel and incident plane waves.
//!
//! Units follow c = ε = μ = 1 unless a function takes them explicitly, so the
//! wavenumber equals the angular frequency.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex 3-vector (field values, currents, dipole moments).
pub type CVec3 = Vector3<Complex64>;
/// Complex 3×3 matrix.
pub type CMat3 = Matrix3<Complex64>;
/// Real point or direction in R³.
pub type Point = Vector3<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Points closer than `COINCIDENCE_GUARD * max(|x|, |y|)` are treated as coincident.
pub const COINCIDENCE_GUARD: f64 = 1e-12;

pub fn cvec(v: &Point) -> CVec3 {
    v.map(|c| Complex64::new(c, 0.0))
}

pub fn czero() -> CVec3 {
    CVec3::zeros()
}

/// Bilinear cross product `a × b`, real vector on the left.
pub fn rcross(a: &Point, b: &CVec3) -> CVec3 {
    cvec(a).cross(b)
}

/// Bilinear dot product (no conjugation).
pub fn rdot(a: &Point, b: &CVec3) -> Complex64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}

fn separation(x: &Point, y: &Point) -> Result<(Point, f64)> {
    let d = x - y;
    let r = d.norm();
    let scale = x.norm().max(y.norm());
    if r == 0.0 || r <= COINCIDENCE_GUARD * scale {
        return Err(Error::CoincidentPoints { distance: r });
    }
    Ok((d, r))
}

/// Outgoing scalar Green function `e^{ikr} / (4π r)`, `r = |x − y|`.
pub fn green(k: f64, x: &Point, y: &Point) -> Result<Complex64> {
    let (_, r) = separation(x, y)?;
    Ok(Complex64::from_polar(1.0 / (4.0 * PI * r), k * r))
}

/// Value, gradient and Hessian of the Green function with respect to its first argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenEval {
    pub value: Complex64,
    pub gradient: CVec3,
    pub hessian: CMat3,
}

/// Radial derivatives `(g, g', g'')` of `e^{ikr}/(4πr)`.
#[inline]
pub(crate) fn radial_derivatives(k: f64, r: f64) -> (Complex64, Complex64, Complex64) {
    let phase = Complex64::from_polar(1.0, k * r);
    let g = phase / (4.0 * PI * r);
    let ikr = I * (k * r);
    let g1 = phase * (ikr - 1.0) / (4.0 * PI * r * r);
    let g2 = phase * (2.0 - 2.0 * ikr - k * k * r * r) / (4.0 * PI * r * r * r);
    (g, g1, g2)
}

/// Green function together with its gradient and Hessian in `x`.
///
/// The Hessian uses the radial decomposition
/// `g'' r̂r̂ᵀ + (g'/r)(I − r̂r̂ᵀ)`, which keeps `tr H = −k² g` exact up to rounding.
pub fn green_derivatives(k: f64, x: &Point, y: &Point) -> Result<GreenEval> {
    let (d, r) = separation(x, y)?;
    Ok(green_derivatives_unchecked(k, &d, r))
}

#[inline]
pub(crate) fn green_derivatives_unchecked(k: f64, d: &Point, r: f64) -> GreenEval {
    let (g, g1, g2) = radial_derivatives(k, r);
    let rhat = d / r;
    let outer = rhat * rhat.transpose();
    let transverse = Matrix3::identity() - outer;
    let hessian = outer.map(|v| g2 * v) + transverse.map(|v| (g1 / r) * v);
    GreenEval {
        value: g,
        gradient: rhat.map(|c| g1 * c),
        hessian,
    }
}

/// Gradient of `g(·, y)` evaluated at `x`, from a precomputed separation `d = x − y`.
#[inline]
pub(crate) fn green_gradient_unchecked(k: f64, d: &Point, r: f64) -> CVec3 {
    let phase = Complex64::from_polar(1.0, k * r);
    let g1 = phase * (I * (k * r) - 1.0) / (4.0 * PI * r * r * r);
    d.map(|c| g1 * c)
}

/// Dyadic dipole interaction `∇ₓ × [∇ₓ g(x, y), A] = k² g A + (A·∇)∇g`.
pub fn dipole_kernel(k: f64, x: &Point, y: &Point, a: &CVec3) -> Result<CVec3> {
    let (d, r) = separation(x, y)?;
    Ok(dipole_kernel_unchecked(k, &d, r, a))
}

/// Dipole interaction tensor `k² g I + ∇∇g` for separation `d = x − y`.
#[inline]
pub(crate) fn dipole_tensor(k: f64, d: &Point, r: f64) -> CMat3 {
    let (g, g1, g2) = radial_derivatives(k, r);
    let rhat = d / r;
    // k²g I + g'/r (I − r̂r̂ᵀ) + g'' r̂r̂ᵀ
    let diag = k * k * g + g1 / r;
    let radial = g2 - g1 / r;
    let mut t = CMat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut v = radial * (rhat[i] * rhat[j]);
            if i == j {
                v += diag;
            }
            t[(i, j)] = v;
        }
    }
    t
}

#[inline]
pub(crate) fn dipole_kernel_unchecked(k: f64, d: &Point, r: f64, a: &CVec3) -> CVec3 {
    let (g, g1, g2) = radial_derivatives(k, r);
    let rhat = d / r;
    let proj = rdot(&rhat, a);
    let diag = k * k * g + g1 / r;
    let radial = (g2 - g1 / r) * proj;
    a.map(|c| diag * c) + rhat.map(|c| radial * c)
}

/// Incident plane wave `E₀(x) = 𝓔 e^{ik α·x}` with `𝓔·α = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    k: f64,
    direction: Point,
    amplitude: CVec3,
}

/// Relative tolerance on `|𝓔·α| / |𝓔|` accepted by [`PlaneWave::new`].
pub const TRANSVERSALITY_TOL: f64 = 1e-8;

impl PlaneWave {
    /// Strict constructor: `k > 0`, `|α| = 1` and `𝓔·α = 0` within tolerance.
    pub fn new(k: f64, direction: Point, amplitude: CVec3) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidInput(format!("wavenumber must be positive, got {k}")));
        }
        if (direction.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "incidence direction must be a unit vector, |alpha| = {}",
                direction.norm()
            )));
        }
        let along = rdot(&direction, &amplitude).norm();
        if along > TRANSVERSALITY_TOL * amplitude.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!(
                "polarization violates transversality E·alpha = 0 (|E·alpha| = {along:e})"
            )));
        }
        Ok(Self {
            k,
            direction,
            amplitude,
        })
    }

    /// Normalizes the direction and projects out the longitudinal part of the
    /// polarization. Returns the wave and the magnitude of the removed component.
    pub fn projected(k: f64, direction: Point, amplitude: CVec3) -> Result<(Self, f64)> {
        let n = direction.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidInput("incidence direction is zero".into()));
        }
        let alpha = direction / n;
        let along = rdot(&alpha, &amplitude);
        let projected = amplitude - cvec(&alpha) * along;
        if amplitude.norm() > 0.0 && projected.norm() <= 1e-12 * amplitude.norm() {
            return Err(Error::InvalidInput(
                "polarization is parallel to the incidence direction; E·alpha = 0 leaves no transverse part".into(),
            ));
        }
        Ok((Self::new(k, alpha, projected)?, along.norm()))
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn direction(&self) -> Point {
        self.direction
    }

    pub fn amplitude(&self) -> CVec3 {
        self.amplitude
    }

    /// Same wave with the polarization multiplied by `s`.
    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            amplitude: self.amplitude * s,
            ..*self
        }
    }
}

/// `𝓔 e^{ik α·x}`.
pub fn plane_wave_field(pw: &PlaneWave, x: &Point) -> CVec3 {
    let phase = Complex64::from_polar(1.0, pw.k * pw.direction.dot(x));
    pw.amplitude * phase
}

/// `∇ × E₀ = ik [α, 𝓔] e^{ik α·x}`.
pub fn plane_wave_curl(pw: &PlaneWave, x: &Point) -> CVec3 {
    let phase = Complex64::from_polar(1.0, pw.k * pw.direction.dot(x));
    rcross(&pw.direction, &pw.amplitude) * (I * pw.k * phase)
}

/// Magnetic field from the curl of the electric field, `∇×E / (iωμ)`.
pub fn h_from_e(curl_e: &CVec3, omega: f64, mu: f64) -> CVec3 {
    curl_e / (I * omega * mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn green_static_and_periodic_values() {
        let x = Point::new(1.0, 0.0, 0.0);
        let o = Point::zeros();
        let g0 = green(0.0, &x, &o).unwrap();
        assert!((g0 - c(1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
        let g = green(2.0 * PI, &x, &o).unwrap();
        assert!((g - c(0.079_577_471_545_947_67, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn green_unit_wavenumber_against_high_precision_value() {
        // cos(1)/(4π), sin(1)/(4π) evaluated to 30 digits
        let g = green(1.0, &Point::new(1.0, 0.0, 0.0), &Point::zeros()).unwrap();
        assert!((g.re - 0.042_995_891_371_431_802).abs() < 1e-15);
        assert!((g.im - 0.066_962_133_350_290_947).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let x = Point::new(0.3, -0.2, 0.1);
        assert!(matches!(green(1.0, &x, &x), Err(Error::CoincidentPoints { .. })));
        let y = x + Point::new(1e-14, 0.0, 0.0);
        assert!(green_derivatives(1.0, &x, &y).is_err());
        assert!(dipole_kernel(1.0, &x, &y, &czero()).is_err());
    }

    #[test]
    fn static_gradient_is_coulomb() {
        let ge = green_derivatives(0.0, &Point::new(1.0, 0.0, 0.0), &Point::zeros()).unwrap();
        let expected = CVec3::new(c(-1.0 / (4.0 * PI), 0.0), czero().y, czero().z);
        assert!((ge.gradient - expected).norm() < 1e-16);
    }

    #[test]
    fn hessian_trace_and_symmetry() {
        let ge = green_derivatives(2.3, &Point::new(0.4, -1.1, 0.7), &Point::new(-0.2, 0.3, 0.1)).unwrap();
        let tr = ge.hessian.trace();
        assert!((tr + 2.3 * 2.3 * ge.value).norm() <= 1e-10 * (2.3 * 2.3 * ge.value.norm()));
        assert!((ge.hessian - ge.hessian.transpose()).norm() < 1e-15);
    }

    #[test]
    fn reciprocity() {
        let x = Point::new(0.4, -1.1, 0.7);
        let y = Point::new(-0.2, 0.3, 0.1);
        assert_eq!(green(1.7, &x, &y).unwrap(), green(1.7, &y, &x).unwrap());
        let gx = green_derivatives(1.7, &x, &y).unwrap().gradient;
        let gy = green_derivatives(1.7, &y, &x).unwrap().gradient;
        assert!((gx + gy).norm() < 1e-15);
    }

    #[test]
    fn dipole_kernel_matches_tensor_form() {
        let x = Point::new(0.4, -1.1, 0.7);
        let y = Point::new(-0.2, 0.3, 0.1);
        let a = CVec3::new(c(1.0, 0.5), c(-0.3, 2.0), c(0.1, -0.7));
        let direct = dipole_kernel(1.3, &x, &y, &a).unwrap();
        let d = x - y;
        let t = dipole_tensor(1.3, &d, d.norm());
        assert!((direct - t * a).norm() < 1e-14);
        let ge = green_derivatives(1.3, &x, &y).unwrap();
        let via_hessian = a * (1.3 * 1.3 * ge.value) + ge.hessian * a;
        assert!((direct - via_hessian).norm() < 1e-14);
        assert_eq!(dipole_kernel(1.3, &x, &y, &czero()).unwrap(), czero());
    }

    #[test]
    fn plane_wave_values() {
        let pw = PlaneWave::new(PI, Point::z(), CVec3::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(plane_wave_field(&pw, &Point::zeros()), pw.amplitude());
        let e = plane_wave_field(&pw, &Point::new(0.0, 0.0, 1.0));
        assert!((e - CVec3::new(c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).norm() < 1e-15);

        let pw1 = PlaneWave::new(1.0, Point::z(), CVec3::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        let curl = plane_wave_curl(&pw1, &Point::zeros());
        assert!((curl - CVec3::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0))).norm() < 1e-15);
        let dark = pw1.scaled(c(0.0, 0.0));
        assert_eq!(plane_wave_curl(&dark, &Point::new(1.0, 2.0, 3.0)), czero());
    }

    #[test]
    fn plane_wave_rejects_longitudinal_polarization() {
        let bad = CVec3::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(PlaneWave::new(1.0, Point::z(), bad).is_err());
        assert!(PlaneWave::projected(1.0, Point::z(), bad).is_err());
        let tilted = CVec3::new(c(1.0, 0.0), c(0.0, 0.0), c(0.1, 0.0));
        let (pw, removed) = PlaneWave::projected(1.0, Point::new(0.0, 0.0, 2.0), tilted).unwrap();
        assert!((removed - 0.1).abs() < 1e-15);
        assert!(rdot(&pw.direction(), &pw.amplitude()).norm() < 1e-15);
    }

    #[test]
    fn magnetic_field_from_curl() {
        assert_eq!(h_from_e(&czero(), 1.0, 1.0), czero());
        let h = h_from_e(&CVec3::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)), 1.0, 1.0);
        assert!((h - CVec3::new(c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))).norm() < 1e-15);
        let h = h_from_e(&CVec3::new(c(0.0, 6.0), c(0.0, 0.0), c(0.0, 0.0)), 2.0, 3.0);
        assert!((h - CVec3::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).norm() < 1e-15);
    }
}
