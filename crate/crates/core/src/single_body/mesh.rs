//! Latitude–longitude surface quadrature with Gauss–Legendre colatitude nodes.

use std::f64::consts::PI;

use super::shape::ParticleShape;
use crate::em::Point;
use crate::error::{Error, Result};

/// Parameter-space cell `[μ_lo, μ_hi] × [φ_lo, φ_hi]` (μ = cos θ) owned by one node.
///
/// Colatitude boundaries are the cumulative Gauss–Legendre weights, so every
/// node lies strictly inside its cell and the cell area equals the node weight
/// up to the quadrature error of the Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mu: [f64; 2],
    pub phi: [f64; 2],
    /// Parameters of the owning node.
    pub node: [f64; 2],
}

/// Quadrature point on the surface: position, unit normal, weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Point,
    pub normal: Point,
    pub weight: f64,
}

/// Quadrature discretization of a closed surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub nodes: Vec<Point>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
    pub cells: Vec<Cell>,
    /// Largest node-to-corner distance of each cell.
    pub cell_radii: Vec<f64>,
    pub level: usize,
    pub center: Point,
    pub shape: ParticleShape,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for l in 2..=n {
                let p2 = ((2 * l - 1) as f64 * z * p1 - (l - 1) as f64 * p0) / l as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Colatitude node count at a refinement level; longitude uses twice as many.
pub fn colatitude_count(level: usize) -> usize {
    2usize << level
}

/// Builds the surface quadrature of `shape` centred at the origin.
///
/// Level `L` uses `2^{L+1}` Gauss–Legendre nodes in `cos θ` and `2^{L+2}`
/// equispaced longitudes, so the node count grows fourfold per level.
pub fn mesh_surface(shape: &ParticleShape, level: usize) -> Result<SurfaceMesh> {
    if level == 0 {
        return Err(Error::InvalidInput("mesh refinement level must be at least 1".into()));
    }
    shape.validate()?;
    let nt = colatitude_count(level);
    let np = 2 * nt;
    let (mu, wmu) = gauss_legendre(nt);
    let dphi = 2.0 * PI / np as f64;
    let n = nt * np;
    let mut mesh = SurfaceMesh {
        nodes: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        cells: Vec::with_capacity(n),
        cell_radii: Vec::new(),
        level,
        center: Point::zeros(),
        shape: *shape,
    };
    let mut bounds = vec![-1.0; nt + 1];
    for i in 0..nt {
        bounds[i + 1] = bounds[i] + wmu[i];
    }
    bounds[nt] = 1.0;
    for (i, &m) in mu.iter().enumerate().rev() {
        for j in 0..np {
            let phi = (j as f64 + 0.5) * dphi;
            let (p, normal, jac) = surface_point(shape, m, phi);
            mesh.nodes.push(p);
            mesh.normals.push(normal);
            mesh.weights.push(jac * wmu[i] * dphi);
            mesh.cells.push(Cell {
                mu: [bounds[i], bounds[i + 1]],
                phi: [j as f64 * dphi, (j + 1) as f64 * dphi],
                node: [m, phi],
            });
        }
    }
    mesh.cell_radii = (0..n).map(|j| mesh.corner_distance(j)).collect();
    Ok(mesh)
}


/// Position, unit normal and area element `dS/(dμ dφ)` at parameters `(μ, φ)`.
fn surface_point(shape: &ParticleShape, mu: f64, phi: f64) -> (Point, Point, f64) {
    let theta = mu.clamp(-1.0, 1.0).acos();
    let (p, dt, dp) = shape.parametrize(theta, phi);
    let cross = dt.cross(&dp);
    let jac = cross.norm();
    (p, cross / jac, jac / theta.sin())
}

/// Cells closer than this many cell radii get a subdivided rule.
const NEAR_FACTOR: f64 = 3.0;
/// Leaf rectangles are split until their diameter is below this fraction of the target distance.
const LEAF_RATIO: f64 = 0.5;
const MAX_DEPTH: usize = 12;
const LEAF_ORDER: usize = 4;
const SELF_ORDER: usize = 12;

impl SurfaceMesh {
    fn point_at(&self, mu: f64, phi: f64) -> (Point, Point, f64) {
        let (p, n, jac) = surface_point(&self.shape, mu, phi);
        (p + self.center, n, jac)
    }

    fn corner_distance(&self, j: usize) -> f64 {
        let c = &self.cells[j];
        let mut r: f64 = 0.0;
        for mu in c.mu {
            for phi in c.phi {
                r = r.max((self.point_at(mu, phi).0 - self.nodes[j]).norm());
            }
        }
        r
    }

    /// Quadrature of cell `j` seen from an off-cell point `x`: the node itself
    /// when `x` is far, otherwise a distance-adapted subdivision of the cell.
    pub fn cell_rule(&self, j: usize, x: &Point) -> Vec<SurfacePoint> {
        if (x - self.nodes[j]).norm() > NEAR_FACTOR * self.cell_radii[j] {
            return vec![SurfacePoint {
                position: self.nodes[j],
                normal: self.normals[j],
                weight: self.weights[j],
            }];
        }
        let c = self.cells[j];
        let mut out = Vec::new();
        self.subdivide(x, c.mu, c.phi, 0, &mut out);
        out
    }

    fn subdivide(&self, x: &Point, mu: [f64; 2], phi: [f64; 2], depth: usize, out: &mut Vec<SurfacePoint>) {
        let (center, _, _) = self.point_at(0.5 * (mu[0] + mu[1]), 0.5 * (phi[0] + phi[1]));
        let mut diam: f64 = 0.0;
        for m in mu {
            for p in phi {
                diam = diam.max(2.0 * (self.point_at(m, p).0 - center).norm());
            }
        }
        if depth < MAX_DEPTH && diam > LEAF_RATIO * (x - center).norm() {
            let mm = 0.5 * (mu[0] + mu[1]);
            let pm = 0.5 * (phi[0] + phi[1]);
            for a in [[mu[0], mm], [mm, mu[1]]] {
                for b in [[phi[0], pm], [pm, phi[1]]] {
                    self.subdivide(x, a, b, depth + 1, out);
                }
            }
            return;
        }
        let (gx, gw) = gauss_legendre(LEAF_ORDER);
        for (xa, wa) in gx.iter().zip(&gw) {
            let m = 0.5 * (mu[0] + mu[1]) + 0.5 * (mu[1] - mu[0]) * xa;
            for (xb, wb) in gx.iter().zip(&gw) {
                let p = 0.5 * (phi[0] + phi[1]) + 0.5 * (phi[1] - phi[0]) * xb;
                let (position, normal, jac) = self.point_at(m, p);
                let weight = jac * wa * wb * 0.25 * (mu[1] - mu[0]) * (phi[1] - phi[0]);
                out.push(SurfacePoint { position, normal, weight });
            }
        }
    }

    /// Quadrature of cell `j` for integrands with an `O(1/r)` singularity at its
    /// own node: four Duffy-collapsed triangles with the apex at the node.
    pub fn self_rule(&self, j: usize) -> Vec<SurfacePoint> {
        let c = self.cells[j];
        let apex = c.node;
        let corners = [[c.mu[0], c.phi[0]], [c.mu[1], c.phi[0]], [c.mu[1], c.phi[1]], [c.mu[0], c.phi[1]]];
        let (gx, gw) = gauss_legendre(SELF_ORDER);
        let mut out = Vec::with_capacity(4 * SELF_ORDER * SELF_ORDER);
        for e in 0..4 {
            let b = corners[e];
            let cc = corners[(e + 1) % 4];
            let pb = [b[0] - apex[0], b[1] - apex[1]];
            let bc = [cc[0] - b[0], cc[1] - b[1]];
            let det = (pb[0] * bc[1] - pb[1] * bc[0]).abs();
            for (xu, wu) in gx.iter().zip(&gw) {
                let u = 0.5 * (1.0 + xu);
                for (xv, wv) in gx.iter().zip(&gw) {
                    let v = 0.5 * (1.0 + xv);
                    let m = apex[0] + u * (pb[0] + v * bc[0]);
                    let p = apex[1] + u * (pb[1] + v * bc[1]);
                    let (position, normal, jac) = self.point_at(m, p);
                    out.push(SurfacePoint {
                        position,
                        normal,
                        weight: jac * det * u * 0.25 * wu * wv,
                    });
                }
            }
        }
        out
    }
}

impl SurfaceMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i N_i`, zero for a closed surface.
    pub fn normal_moment(&self) -> Point {
        self.weights
            .iter()
            .zip(&self.normals)
            .fold(Point::zeros(), |acc, (w, n)| acc + n * *w)
    }

    /// Copy of the mesh rigidly shifted by `offset`.
    pub fn translated(&self, offset: &Point) -> Self {
        let mut m = self.clone();
        for p in &mut m.nodes {
            *p += offset;
        }
        m.center += offset;
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn node_count_grows_fourfold() {
        let s = ParticleShape::sphere(1.0).unwrap();
        let c: Vec<usize> = (1..=3).map(|l| mesh_surface(&s, l).unwrap().len()).collect();
        assert_eq!(c, vec![32, 128, 512]);
        assert!(mesh_surface(&s, 0).is_err());
    }

    #[test]
    fn sphere_area_and_closure() {
        let s = ParticleShape::sphere(1.0).unwrap();
        let m = mesh_surface(&s, 3).unwrap();
        assert!((m.area() / (4.0 * PI) - 1.0).abs() < 1e-3);
        assert!(m.normal_moment().norm() <= 1e-6 * 4.0 * PI);
        assert!(m.weights.iter().all(|w| *w > 0.0));
        assert!(m.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-14));
        assert!(m.nodes.iter().zip(&m.normals).all(|(p, n)| p.dot(n) > 0.0));
    }

    #[test]
    fn oblate_spheroid_area() {
        // closed form 2πa²(1 + (1−e²)/e · atanh e), e² = 3/4, to 30 digits
        let reference = 8.671_882_703_345_051_6;
        let s = ParticleShape::ellipsoid([1.0, 1.0, 0.5]).unwrap();
        let m = mesh_surface(&s, 3).unwrap();
        assert!((m.area() / reference - 1.0).abs() < 1e-3);
        assert!(m.normal_moment().norm() <= 1e-6 * reference);
    }

    #[test]
    fn ellipsoid_area_self_converges() {
        let s = ParticleShape::ellipsoid([1.0, 0.7, 0.4]).unwrap();
        let fine = mesh_surface(&s, 6).unwrap().area();
        let coarse = mesh_surface(&s, 3).unwrap().area();
        assert!((coarse / fine - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cells_tile_parameter_space() {
        let s = ParticleShape::ellipsoid([1.0, 1.0, 0.5]).unwrap();
        let m = mesh_surface(&s, 2).unwrap();
        for c in &m.cells {
            assert!(c.mu[0] < c.node[0] && c.node[0] < c.mu[1]);
            assert!(c.phi[0] < c.node[1] && c.node[1] < c.phi[1]);
        }
        let total: f64 = m.cells.iter().map(|c| (c.mu[1] - c.mu[0]) * (c.phi[1] - c.phi[0])).sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sphere_cell_rules_reproduce_exact_cell_areas() {
        // on a sphere dS = R² dμ dφ, so each cell has area R² Δμ Δφ
        let r = 0.7;
        let m = mesh_surface(&ParticleShape::sphere(r).unwrap(), 3).unwrap();
        for j in [0, 5, 100, 300] {
            let c = m.cells[j];
            let exact = r * r * (c.mu[1] - c.mu[0]) * (c.phi[1] - c.phi[0]);
            let selfw: f64 = m.self_rule(j).iter().map(|q| q.weight).sum();
            assert!((selfw / exact - 1.0).abs() < 1e-12);
            let near: f64 = m.cell_rule(j, &(m.nodes[j] * 1.01)).iter().map(|q| q.weight).sum();
            assert!((near / exact - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_rule_integrates_inverse_distance_on_sphere() {
        // ∫_S dS/|s−t| = 4πR for t on the sphere; the whole-sphere sum with the
        // self rule on the owning cell and subdivided neighbours must reproduce it
        let r = 1.0;
        let m = mesh_surface(&ParticleShape::sphere(r).unwrap(), 3).unwrap();
        for t in [0, 40, 255] {
            let x = m.nodes[t];
            let mut sum = 0.0;
            for j in 0..m.len() {
                let rule = if j == t { m.self_rule(j) } else { m.cell_rule(j, &x) };
                sum += rule.iter().map(|q| q.weight / (q.position - x).norm()).sum::<f64>();
            }
            assert!((sum / (4.0 * PI * r) - 1.0).abs() < 5e-3, "node {t}: {sum}");
        }
    }

    #[test]
    fn translated_mesh_moves_rules() {
        let m = mesh_surface(&ParticleShape::sphere(1.0).unwrap(), 1).unwrap();
        let off = Point::new(3.0, 0.0, 0.0);
        let t = m.translated(&off);
        let a = m.self_rule(3);
        let b = t.self_rule(3);
        assert!((b[7].position - a[7].position - off).norm() < 1e-14);
    }
}
