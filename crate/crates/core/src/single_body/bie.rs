//! Nyström discretization of the surface-current equation
//! `J/2 + ∫_S [N_s, [∇_s g(s,t), J(t)]] dt = −[N, E₀]`.
//!
//! Each node carries the current of its parameter cell. Far cells use the
//! plain node rule, nearby cells a subdivided rule and the node's own cell a
//! singularity-collapsing rule (see [`SurfaceMesh::self_rule`]). Inside a cell
//! the current is the node value projected onto the local tangent plane.

use std::f64::consts::PI;

use faer::Mat;
use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;

use super::mesh::{SurfaceMesh, SurfacePoint};
use crate::em::{cvec, green_gradient_unchecked, plane_wave_field, rcross, rdot, CMat3, CVec3, PlaneWave, Point};
use crate::error::{Error, Result};
use crate::linalg::{DenseLu, SolveReport};
use crate::radiation::DipoleSources;

/// Condition estimates above this are reported as a failure.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Tangential current samples, indexed like the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCurrent {
    pub values: Vec<CVec3>,
}

impl SurfaceCurrent {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![CVec3::zeros(); n],
        }
    }

    /// `max_i |N_i·J_i| / max_i |J_i|` (zero for the zero current).
    pub fn tangentiality(&self, normals: &[Point]) -> f64 {
        let jmax = self.values.iter().map(|j| j.norm()).fold(0.0, f64::max);
        if jmax == 0.0 {
            return 0.0;
        }
        let nmax = self
            .values
            .iter()
            .zip(normals)
            .map(|(j, n)| rdot(n, j).norm())
            .fold(0.0, f64::max);
        nmax / jmax
    }
}

/// Assembled `(½I + T) J = f` system.
pub struct BieSystem {
    pub matrix: Mat<Complex64>,
    pub rhs: Vec<Complex64>,
    pub normals: Vec<Point>,
}

impl BieSystem {
    pub fn unknowns(&self) -> usize {
        self.rhs.len()
    }

    /// `(½I + T) J − f`.
    pub fn residual(&self, current: &SurfaceCurrent) -> Vec<Complex64> {
        let x = flatten(&current.values);
        let mut r = matvec(&self.matrix, &x);
        for (ri, fi) in r.iter_mut().zip(&self.rhs) {
            *ri -= fi;
        }
        r
    }
}

pub(crate) fn flatten(v: &[CVec3]) -> Vec<Complex64> {
    v.iter().flat_map(|c| [c.x, c.y, c.z]).collect()
}

pub(crate) fn unflatten(x: &[Complex64]) -> Vec<CVec3> {
    x.chunks_exact(3).map(|c| CVec3::new(c[0], c[1], c[2])).collect()
}

fn matvec(a: &Mat<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = a.nrows();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (j, xj) in x.iter().enumerate() {
        if *xj == Complex64::new(0.0, 0.0) {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

fn matvec_adjoint(a: &Mat<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            (0..a.nrows()).map(|i| col[i].conj() * x[i]).sum()
        })
        .collect()
}

/// Concatenated nodes of one or more bodies.
struct Union<'a> {
    meshes: Vec<&'a SurfaceMesh>,
    owner: Vec<(usize, usize)>,
    nodes: Vec<Point>,
    normals: Vec<Point>,
}

/// Rule for cell `j` seen from node `i` of the same mesh, or from an outside point.
fn rule_for(mesh: &SurfaceMesh, j: usize, same: bool, x: &Point) -> Vec<SurfacePoint> {
    if same {
        mesh.self_rule(j)
    } else {
        mesh.cell_rule(j, x)
    }
}

fn tangent_projector(n: &Point) -> Matrix3<f64> {
    Matrix3::identity() - n * n.transpose()
}

impl<'a> Union<'a> {
    fn new(meshes: &[&'a SurfaceMesh]) -> Self {
        let mut u = Union {
            meshes: meshes.to_vec(),
            owner: Vec::new(),
            nodes: Vec::new(),
            normals: Vec::new(),
        };
        for (b, m) in meshes.iter().enumerate() {
            u.nodes.extend_from_slice(&m.nodes);
            u.normals.extend_from_slice(&m.normals);
            u.owner.extend((0..m.len()).map(|l| (b, l)));
        }
        u
    }

    /// 3×3 block mapping `J_j` to its contribution at node `i` (without ½I).
    fn block(&self, k: f64, i: usize, j: usize) -> CMat3 {
        let (bj, lj) = self.owner[j];
        let x = self.nodes[i];
        let n = cvec(&self.normals[i]);
        let mut out = CMat3::zeros();
        for q in rule_for(self.meshes[bj], lj, i == j, &x) {
            let d = x - q.position;
            let grad = green_gradient_unchecked(k, &d, d.norm());
            let ndg = n.dot(&grad);
            // N×(∇g×J) = ∇g (N·J) − J (N·∇g)
            let kernel = grad * n.transpose() - CMat3::identity() * ndg;
            out += kernel * tangent_projector(&q.normal).map(|v| Complex64::new(v * q.weight, 0.0));
        }
        out
    }

    fn operator(&self, k: f64, half_identity: bool) -> Mat<Complex64> {
        let n = self.nodes.len();
        let rows: Vec<Vec<CMat3>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| self.block(k, i, j)).collect())
            .collect();
        let mut m = Mat::<Complex64>::zeros(3 * n, 3 * n);
        for (i, row) in rows.iter().enumerate() {
            for (j, blk) in row.iter().enumerate() {
                for a in 0..3 {
                    for b in 0..3 {
                        m[(3 * i + a, 3 * j + b)] = blk[(a, b)];
                    }
                }
            }
        }
        if half_identity {
            for d in 0..3 * n {
                m[(d, d)] += Complex64::new(0.5, 0.0);
            }
        }
        m
    }
}

/// Assembles the current equation for a single body.
pub fn assemble_bie(mesh: &SurfaceMesh, pw: &PlaneWave) -> Result<BieSystem> {
    assemble_bie_bodies(&[mesh], pw)
}

/// Assembles the coupled current equation on the union of several bodies.
pub fn assemble_bie_bodies(meshes: &[&SurfaceMesh], pw: &PlaneWave) -> Result<BieSystem> {
    if meshes.is_empty() || meshes.iter().any(|m| m.is_empty()) {
        return Err(Error::EmptyMesh);
    }
    for m in meshes {
        let ka = pw.k() * m.shape.size();
        if ka > 0.5 {
            log::warn!("ka = {ka:.3} is outside the small-body regime ka <= 0.5");
        }
    }
    let u = Union::new(meshes);
    let matrix = u.operator(pw.k(), true);
    let rhs = u
        .nodes
        .iter()
        .zip(&u.normals)
        .flat_map(|(s, n)| {
            let f = -rcross(n, &plane_wave_field(pw, s));
            [f.x, f.y, f.z]
        })
        .collect();
    Ok(BieSystem {
        matrix,
        rhs,
        normals: u.normals,
    })
}

/// The discretized operator `T` alone (no ½I), for a single body.
pub fn t_matrix(mesh: &SurfaceMesh, k: f64) -> Mat<Complex64> {
    Union::new(&[mesh]).operator(k, false)
}

/// `T J` evaluated through `∫ (∇_s g N_s·J − J ∂g/∂N_s) dt` with the same
/// cell rules as the assembled matrix.
pub fn apply_t_alternative(mesh: &SurfaceMesh, k: f64, current: &[CVec3]) -> Vec<CVec3> {
    (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let s = mesh.nodes[i];
            let n = mesh.normals[i];
            let mut acc = CVec3::zeros();
            for (j, jj) in current.iter().enumerate() {
                for q in rule_for(mesh, j, i == j, &s) {
                    let local = jj - cvec(&q.normal) * rdot(&q.normal, jj);
                    let d = s - q.position;
                    let grad = green_gradient_unchecked(k, &d, d.norm());
                    let dg_dn = rdot(&n, &grad);
                    acc += (grad * rdot(&n, &local) - local * dg_dn) * Complex64::new(q.weight, 0.0);
                }
            }
            acc
        })
        .collect()
}

/// Solves the assembled system by dense LU, rejecting ill-conditioned systems.
pub fn solve_current(system: &BieSystem) -> Result<(SurfaceCurrent, SolveReport)> {
    let lu = DenseLu::new(&system.matrix);
    let condition = lu.condition_estimate();
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let x = lu.solve(&system.rhs);
    let current = SurfaceCurrent { values: unflatten(&x) };
    let r = system.residual(&current);
    let bn = crate::linalg::norm2(&system.rhs);
    let residual = if bn > 0.0 { crate::linalg::norm2(&r) / bn } else { crate::linalg::norm2(&r) };
    Ok((
        current,
        SolveReport {
            method: "direct".into(),
            iterations: 0,
            residual,
            history: vec![residual],
            contraction: None,
            condition: Some(condition),
        },
    ))
}

/// Total current `Q = ∫_S J dt`.
pub fn compute_q(current: &SurfaceCurrent, mesh: &SurfaceMesh) -> CVec3 {
    current
        .values
        .iter()
        .zip(&mesh.weights)
        .fold(CVec3::zeros(), |acc, (j, w)| acc + j * Complex64::new(*w, 0.0))
}

/// Largest singular value of `T` restricted to tangential fields, by power
/// iteration on `(PTP)ᴴ(PTP)`.
pub fn operator_norm_t(mesh: &SurfaceMesh, k: f64) -> f64 {
    let t = t_matrix(mesh, k);
    let normals = &mesh.normals;
    let project = |x: &mut [Complex64]| {
        for (c, n) in x.chunks_exact_mut(3).zip(normals) {
            let v = CVec3::new(c[0], c[1], c[2]);
            let p = v - cvec(n) * rdot(n, &v);
            c.copy_from_slice(&[p.x, p.y, p.z]);
        }
    };
    let dim = 3 * mesh.len();
    let mut x: Vec<Complex64> = (0..dim)
        .map(|i| Complex64::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
        .collect();
    project(&mut x);
    let mut sigma2 = 0.0;
    for _ in 0..300 {
        let xn = crate::linalg::norm2(&x);
        x.iter_mut().for_each(|c| *c /= xn);
        let y = matvec(&t, &x);
        let mut z = matvec_adjoint(&t, &y);
        project(&mut z);
        let next = crate::linalg::norm2(&z);
        let converged = (next - sigma2).abs() <= 1e-12 * next;
        sigma2 = next;
        x = z;
        if converged {
            break;
        }
    }
    sigma2.sqrt()
}

/// `max_t |−∫_S ∂g₀(s,t)/∂N_s ds − ½|` with the static kernel `1/(4π|s−t|)`.
pub fn gauss_identity_check(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.len())
        .into_par_iter()
        .map(|t| {
            let target = mesh.nodes[t];
            let mut sum = 0.0;
            for j in 0..mesh.len() {
                for q in rule_for(mesh, j, j == t, &target) {
                    let d = q.position - target;
                    let r = d.norm();
                    // ∂g₀/∂N_s = −N_s·(s−t)/(4π r³)
                    sum += q.weight * q.normal.dot(&d) / (4.0 * PI * r * r * r);
                }
            }
            (sum - 0.5).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Point sources reproducing `v_E(x) = ∇ × ∫_S g(x,t) J(t) dt` by the node rule.
pub fn current_sources(mesh: &SurfaceMesh, current: &SurfaceCurrent) -> DipoleSources {
    DipoleSources {
        positions: mesh.nodes.clone(),
        moments: current
            .values
            .iter()
            .zip(&mesh.weights)
            .map(|(j, w)| j * Complex64::new(*w, 0.0))
            .collect(),
    }
}

/// Scattered field of the surface current at an exterior point.
pub fn scattered_field(mesh: &SurfaceMesh, current: &SurfaceCurrent, k: f64, x: &Point) -> Result<CVec3> {
    current_sources(mesh, current).field(k, x)
}
