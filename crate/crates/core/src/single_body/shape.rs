use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::em::Point;
use crate::error::{Error, Result};

/// Smooth convex particle shapes with an analytic surface parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParticleShape {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
}

impl ParticleShape {
    pub fn sphere(radius: f64) -> Result<Self> {
        let s = ParticleShape::Sphere { radius };
        s.validate()?;
        Ok(s)
    }

    pub fn ellipsoid(semi_axes: [f64; 3]) -> Result<Self> {
        let s = ParticleShape::Ellipsoid { semi_axes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.semi_axes().iter().all(|&v| v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("shape semi-axes must be positive: {self:?}")))
        }
    }

    pub fn semi_axes(&self) -> [f64; 3] {
        match *self {
            ParticleShape::Sphere { radius } => [radius; 3],
            ParticleShape::Ellipsoid { semi_axes } => semi_axes,
        }
    }

    /// Characteristic size `a = ½ diam D` (the largest semi-axis).
    pub fn size(&self) -> f64 {
        self.semi_axes().into_iter().fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        let [x, y, z] = self.semi_axes();
        4.0 / 3.0 * PI * x * y * z
    }

    /// Shape factor `c_D = |D| / a³`.
    pub fn shape_factor(&self) -> f64 {
        self.volume() / self.size().powi(3)
    }

    /// Same geometry rescaled so that the characteristic size equals `a`.
    pub fn with_size(&self, a: f64) -> Self {
        let s = a / self.size();
        match *self {
            ParticleShape::Sphere { .. } => ParticleShape::Sphere { radius: a },
            ParticleShape::Ellipsoid { semi_axes } => ParticleShape::Ellipsoid {
                semi_axes: semi_axes.map(|v| v * s),
            },
        }
    }

    /// Surface point, ∂/∂θ and ∂/∂φ of the (θ, φ) parametrization about the origin.
    pub(crate) fn parametrize(&self, theta: f64, phi: f64) -> (Point, Point, Point) {
        let [ax, ay, az] = self.semi_axes();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let p = Point::new(ax * st * cp, ay * st * sp, az * ct);
        let dt = Point::new(ax * ct * cp, ay * ct * sp, -az * st);
        let dp = Point::new(-ax * st * sp, ay * st * cp, 0.0);
        (p, dt, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_shape_factor() {
        let s = ParticleShape::sphere(0.3).unwrap();
        assert!((s.shape_factor() - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((s.volume() - s.shape_factor() * 0.3f64.powi(3)).abs() < 1e-16);
    }

    #[test]
    fn ellipsoid_size_is_largest_semi_axis() {
        let e = ParticleShape::ellipsoid([1.0, 1.0, 0.5]).unwrap();
        assert_eq!(e.size(), 1.0);
        assert!((e.shape_factor() - 4.0 * PI / 3.0 * 0.5).abs() < 1e-14);
        let small = e.with_size(0.01);
        assert!((small.shape_factor() - e.shape_factor()).abs() < 1e-14);
        assert!((small.size() - 0.01).abs() < 1e-18);
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(ParticleShape::sphere(0.0).is_err());
        assert!(ParticleShape::ellipsoid([1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn parametrization_lies_on_surface_with_gradient_normal() {
        let e = ParticleShape::ellipsoid([1.0, 0.7, 0.4]).unwrap();
        let (p, dt, dp) = e.parametrize(0.9, 2.1);
        let level = (p.x / 1.0).powi(2) + (p.y / 0.7).powi(2) + (p.z / 0.4).powi(2);
        assert!((level - 1.0).abs() < 1e-14);
        let n = dt.cross(&dp).normalize();
        let grad = Point::new(p.x, p.y / 0.49, p.z / 0.16).normalize();
        assert!((n - grad).norm() < 1e-14);
    }
}
