//! Homogenized volume integral equation
//! `E(x) = E₀(x) − c₀ ∇×∫_Ω g(x,y) N(y) ∇×E(y) dy` on a voxel grid.
//!
//! The equation is closed in the curl `W = ∇×E`:
//! `W(x) = W₀(x) − c₀ ∫_Ω (k² g I + ∇∇g)(x−y) N(y) W(y) dy`,
//! discretized voxel by voxel and applied with zero-padded FFT convolutions.
//! `E` is then recovered from `E = E₀ − c₀ ∫ ∇g × N W`.

mod fft;
mod grid;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{dipole_tensor, green_gradient_unchecked, plane_wave_curl, plane_wave_field, CMat3, CVec3, PlaneWave, Point};
use crate::ensemble::{Aabb, DensityField};
use crate::error::{Error, Result};
use crate::linalg::{norm2, relative_residual, solve_iterative, InteractionOperator, IterativeOptions, SolveReport};
use crate::radiation::DipoleSources;
use crate::single_body::mesh::gauss_legendre;

use fft::Fft3;
pub use grid::{FieldKind, GridField};
use grid::{check_dims, unravel};

/// `∫ |y|⁻¹ dy` over the unit cube centred at the origin.
pub const CUBE_INVERSE_DISTANCE: f64 = 2.3800773639795535;

/// Accepted relative residual of a continuum solve.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

/// Treatment of a voxel's interaction with itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfVoxel {
    /// Cube-excluded principal value plus the smooth dynamic remainder. A voxel
    /// then acts on itself the way a lattice particle does: not at all, up to
    /// `O(k²h²)`. This is the closure whose solution is the limit of the
    /// many-body effective field.
    #[default]
    Lattice,
    /// Additionally applies the `−⅓ δ` depolarization term of `∇∇g`, i.e. the
    /// distributional curl-curl of the volume potential.
    Depolarization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumOptions {
    pub self_voxel: SelfVoxel,
    pub solver: IterativeOptions,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            self_voxel: SelfVoxel::Lattice,
            solver: IterativeOptions {
                tolerance: 1e-10,
                ..IterativeOptions::default()
            },
        }
    }
}

/// Sub-cube count per axis for the voxel integral at Chebyshev offset `m`
/// (in voxels); `None` means the midpoint rule.
fn subdivisions(m: i64) -> Option<usize> {
    match m {
        1 => Some(4),
        2 => Some(3),
        3..=6 => Some(2),
        7..=10 => Some(1),
        _ => None,
    }
}

/// Tensor `∫_voxel (k²g I + ∇∇g)(d − y) dy` and vector `∫_voxel ∇g(d − y) dy`
/// for a source voxel of side `h` whose centre sits at `−offset·h` from the target.
fn voxel_kernels(k: f64, h: f64, offset: [i64; 3], self_voxel: SelfVoxel, gl: &(Vec<f64>, Vec<f64>)) -> (CMat3, CVec3) {
    let m = offset.iter().map(|o| o.abs()).max().unwrap_or(0);
    if m == 0 {
        let s = Complex64::new(k * k * CUBE_INVERSE_DISTANCE * h * h, k * k * k * h * h * h) / (6.0 * PI);
        let depol = if self_voxel == SelfVoxel::Depolarization { -1.0 / 3.0 } else { 0.0 };
        return (CMat3::identity() * (s + depol), CVec3::zeros());
    }
    let d = Point::new(offset[0] as f64, offset[1] as f64, offset[2] as f64) * h;
    let Some(s) = subdivisions(m) else {
        let r = d.norm();
        let v = Complex64::new(h * h * h, 0.0);
        return (dipole_tensor(k, &d, r) * v, green_gradient_unchecked(k, &d, r) * v);
    };
    let (x, w) = gl;
    let sub = h / s as f64;
    let mut t = CMat3::zeros();
    let mut g = CVec3::zeros();
    for c in 0..s * s * s {
        let cell = [c % s, (c / s) % s, c / (s * s)];
        let lo = cell.map(|i| -0.5 * h + i as f64 * sub);
        for (qa, wa) in x.iter().zip(w) {
            for (qb, wb) in x.iter().zip(w) {
                for (qc, wc) in x.iter().zip(w) {
                    let y = Point::new(
                        lo[0] + 0.5 * sub * (qa + 1.0),
                        lo[1] + 0.5 * sub * (qb + 1.0),
                        lo[2] + 0.5 * sub * (qc + 1.0),
                    );
                    let p = d - y;
                    let r = p.norm();
                    let wt = Complex64::new(wa * wb * wc * (0.5 * sub).powi(3), 0.0);
                    t += dipole_tensor(k, &p, r) * wt;
                    g += green_gradient_unchecked(k, &p, r) * wt;
                }
            }
        }
    }
    (t, g)
}

/// Fourier transforms of the six independent tensor components and three
/// gradient components, laid out on the `2n` padded grid.
struct KernelTables {
    tensor: [Vec<Complex64>; 6],
    gradient: [Vec<Complex64>; 3],
}

const TENSOR_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn tensor_slot(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

fn build_tables(k: f64, h: f64, dims: [usize; 3], fft: &Fft3, self_voxel: SelfVoxel) -> KernelTables {
    let p = fft.dims;
    let len = fft.len();
    let gl = gauss_legendre(3);
    let zero = Complex64::new(0.0, 0.0);
    let mut tensor: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![zero; len]);
    let mut gradient: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![zero; len]);
    // padded index → signed offset, or None in the unused gap
    let offset = |i: usize, a: usize| -> Option<i64> {
        if i < dims[a] {
            Some(i as i64)
        } else if i > p[a] - dims[a] {
            Some(i as i64 - p[a] as i64)
        } else {
            None
        }
    };
    let plane = p[0] * p[1];
    for kz in 0..p[2] {
        let Some(oz) = offset(kz, 2) else { continue };
        let values: Vec<Option<(CMat3, CVec3)>> = (0..plane)
            .into_par_iter()
            .map(|f| {
                let (ix, iy) = (f % p[0], f / p[0]);
                Some(voxel_kernels(k, h, [offset(ix, 0)?, offset(iy, 1)?, oz], self_voxel, &gl))
            })
            .collect();
        for (f, v) in values.into_iter().enumerate() {
            if let Some((t, g)) = v {
                let flat = f + plane * kz;
                for (slot, (a, b)) in TENSOR_PAIRS.iter().enumerate() {
                    tensor[slot][flat] = t[(*a, *b)];
                }
                for a in 0..3 {
                    gradient[a][flat] = g[a];
                }
            }
        }
    }
    tensor.iter_mut().chain(gradient.iter_mut()).for_each(|t| fft.forward(t));
    KernelTables { tensor, gradient }
}

/// The interaction `x ↦ c₀ K[N x]` of the curl-closed system, with `x` the
/// interleaved voxel values of `W`.
pub struct ContinuumOperator {
    k: f64,
    dims: [usize; 3],
    spacing: f64,
    /// `c₀ N` per voxel.
    weights: Vec<f64>,
    fft: Fft3,
    tables: KernelTables,
}

impl ContinuumOperator {
    pub fn new(k: f64, bbox: &Aabb, dims: [usize; 3], weights: Vec<f64>, self_voxel: SelfVoxel) -> Result<Self> {
        check_dims(dims, 2)?;
        bbox.validate()?;
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidInput(format!("wavenumber must be positive, got {k}")));
        }
        let h = cubic_spacing(bbox, dims)?;
        if weights.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidInput("one weight per voxel is required".into()));
        }
        let fft = Fft3::new(dims.map(|n| 2 * n));
        let tables = build_tables(k, h, dims, &fft, self_voxel);
        Ok(Self {
            k,
            dims,
            spacing: h,
            weights,
            fft,
            tables,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    fn padded_index(&self, flat: usize) -> usize {
        let [i, j, l] = unravel(self.dims, flat);
        let p = self.fft.dims;
        i + p[0] * (j + p[1] * l)
    }

    /// Transforms the three components of `N W` (already weighted).
    fn transform_sources(&self, x: &[Complex64]) -> [Vec<Complex64>; 3] {
        let zero = Complex64::new(0.0, 0.0);
        std::array::from_fn(|a| {
            let mut buf = vec![zero; self.fft.len()];
            for v in 0..self.voxels() {
                buf[self.padded_index(v)] = x[3 * v + a] * self.weights[v];
            }
            self.fft.forward(&mut buf);
            buf
        })
    }

    fn gather(&self, mut spectra: [Vec<Complex64>; 3], out: &mut [Complex64]) {
        for (a, s) in spectra.iter_mut().enumerate() {
            self.fft.inverse(s);
            for v in 0..self.voxels() {
                out[3 * v + a] = s[self.padded_index(v)];
            }
        }
    }

    /// `∫ ∇g × (c₀ N W)` at every voxel centre.
    pub fn gradient_cross(&self, w: &[Complex64]) -> Vec<CVec3> {
        let u = self.transform_sources(w);
        let g = &self.tables.gradient;
        let spectra: [Vec<Complex64>; 3] = std::array::from_fn(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            (0..self.fft.len()).into_par_iter().map(|f| g[b][f] * u[c][f] - g[c][f] * u[b][f]).collect()
        });
        let mut out = vec![Complex64::new(0.0, 0.0); 3 * self.voxels()];
        self.gather(spectra, &mut out);
        out.chunks(3).map(|c| CVec3::new(c[0], c[1], c[2])).collect()
    }
}

impl InteractionOperator for ContinuumOperator {
    fn dim(&self) -> usize {
        3 * self.voxels()
    }

    fn apply_interaction(&self, x: &[Complex64], out: &mut [Complex64]) {
        let u = self.transform_sources(x);
        let t = &self.tables.tensor;
        let spectra: [Vec<Complex64>; 3] = std::array::from_fn(|a| {
            let slots = [tensor_slot(a, 0), tensor_slot(a, 1), tensor_slot(a, 2)];
            (0..self.fft.len())
                .into_par_iter()
                .map(|f| t[slots[0]][f] * u[0][f] + t[slots[1]][f] * u[1][f] + t[slots[2]][f] * u[2][f])
                .collect()
        });
        self.gather(spectra, out);
    }
}

/// Common voxel side, or an error when the voxels are not cubes.
fn cubic_spacing(bbox: &Aabb, dims: [usize; 3]) -> Result<f64> {
    let l = bbox.lengths();
    let h = [0, 1, 2].map(|a| l[a] / dims[a] as f64);
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    if h.iter().any(|v| (v - hmax).abs() > 1e-9 * hmax) {
        return Err(Error::InvalidInput(format!(
            "voxels must be cubes; spacings are {h:?} (choose dims proportional to the box lengths)"
        )));
    }
    Ok(hmax)
}

#[derive(Debug, Clone)]
pub struct ContinuumSolution {
    pub electric: GridField,
    pub curl: GridField,
    /// `N` at the voxel centres.
    pub density: Vec<f64>,
    pub c0: f64,
    pub incident: PlaneWave,
    pub self_voxel: SelfVoxel,
    pub report: SolveReport,
}

impl ContinuumSolution {
    pub fn k(&self) -> f64 {
        self.incident.k()
    }

    pub fn spacing(&self) -> f64 {
        self.electric.spacing()[0]
    }

    /// Voxels as point sources `∇g × V` with `V = −c₀ h³ N W`, for fields outside `Ω`.
    pub fn sources(&self) -> DipoleSources {
        let vol = self.spacing().powi(3);
        let mut s = DipoleSources::default();
        for (v, (n, w)) in self.density.iter().zip(&self.curl.values).enumerate() {
            if *n > 0.0 {
                s.positions.push(self.curl.center(self.curl.unravel(v)));
                s.moments.push(w * Complex64::new(-self.c0 * vol * n, 0.0));
            }
        }
        s
    }

    /// Total field at a point outside the grid box.
    pub fn field_at(&self, x: &Point) -> Result<CVec3> {
        let gap = self.electric.bbox.distance(x);
        if gap <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "probe {x:?} lies inside the grid; read the voxel values instead"
            )));
        }
        Ok(plane_wave_field(&self.incident, x) + self.sources().field(self.k(), x)?)
    }

    /// Scattered part `E − E₀` on the grid.
    pub fn scattered(&self) -> GridField {
        let mut f = self.electric.clone();
        for (v, e) in f.values.iter_mut().enumerate() {
            *e -= plane_wave_field(&self.incident, &self.electric.center(self.electric.unravel(v)));
        }
        f
    }

    /// Scattered part of the curl, `W − W₀`.
    pub fn scattered_curl(&self) -> GridField {
        let mut f = self.curl.clone();
        for (v, w) in f.values.iter_mut().enumerate() {
            *w -= plane_wave_curl(&self.incident, &self.curl.center(self.curl.unravel(v)));
        }
        f
    }
}

pub fn solve_continuum(density: &DensityField, pw: &PlaneWave, c0: f64, dims: [usize; 3]) -> Result<ContinuumSolution> {
    solve_continuum_with(density, pw, c0, dims, &ContinuumOptions::default())
}

/// Solves the curl-closed system on a `dims` grid over the density's domain.
pub fn solve_continuum_with(
    density: &DensityField,
    pw: &PlaneWave,
    c0: f64,
    dims: [usize; 3],
    opts: &ContinuumOptions,
) -> Result<ContinuumSolution> {
    density.validate()?;
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::InvalidInput(format!("shape constant must be positive, got {c0}")));
    }
    check_dims(dims, 2)?;
    let bbox = density.domain();
    cubic_spacing(&bbox, dims)?;
    let n: Vec<f64> = (0..dims.iter().product())
        .map(|v| density.value_at(&grid_center(&bbox, dims, v)))
        .collect();
    let e0 = GridField::from_fn(dims, bbox, FieldKind::Electric, |x| plane_wave_field(pw, x))?;
    let w0 = GridField::from_fn(dims, bbox, FieldKind::Curl, |x| plane_wave_curl(pw, x))?;
    let mut sol = ContinuumSolution {
        electric: e0,
        curl: w0,
        density: n,
        c0,
        incident: pw.clone(),
        self_voxel: opts.self_voxel,
        report: SolveReport {
            method: "trivial".into(),
            ..Default::default()
        },
    };
    if sol.density.iter().all(|v| *v == 0.0) {
        return Ok(sol);
    }
    let weights = sol.density.iter().map(|v| c0 * v).collect();
    let op = ContinuumOperator::new(pw.k(), &bbox, dims, weights, opts.self_voxel)?;
    let b: Vec<Complex64> = sol.curl.values.iter().flat_map(|w| [w.x, w.y, w.z]).collect();
    let (x, mut report) = solve_iterative(&op, &b, &opts.solver)?;
    report.residual = if norm2(&b) > 0.0 { relative_residual(&op, &x, &b) } else { norm2(&x) };
    if report.residual > RESIDUAL_LIMIT || !report.residual.is_finite() {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            history: report.history,
        });
    }
    report.condition = Some(condition_estimate(&op));
    let scattered = op.gradient_cross(&x);
    for (e, s) in sol.electric.values.iter_mut().zip(&scattered) {
        *e -= s;
    }
    sol.curl.values = x.chunks(3).map(|c| CVec3::new(c[0], c[1], c[2])).collect();
    sol.report = report;
    Ok(sol)
}

fn grid_center(bbox: &Aabb, dims: [usize; 3], flat: usize) -> Point {
    crate::ensemble::cell_center(bbox, dims, unravel(dims, flat))
}

/// `(1 + ‖G‖)/(1 − ‖G‖)` with `‖G‖` from a short power iteration; infinite when
/// the estimate reaches 1 (the bound is then uninformative, not the system singular).
pub fn condition_estimate(op: &ContinuumOperator) -> f64 {
    let n = op.dim();
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(((i * 7919) % 101) as f64 / 101.0 - 0.5, ((i * 104729) % 97) as f64 / 97.0 - 0.5))
        .collect();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let mut g: f64 = 0.0;
    for _ in 0..8 {
        let xn = norm2(&x);
        if xn == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= xn);
        op.apply_interaction(&x, &mut y);
        g = g.max(norm2(&y));
        std::mem::swap(&mut x, &mut y);
    }
    if g < 1.0 {
        (1.0 + g) / (1.0 - g)
    } else {
        f64::INFINITY
    }
}

/// `max |−∇²E − k²E + qE| / (k² max|E|)` over interior voxels, with
/// `q = k² c₀ N / (1 + c₀ N)`.
pub fn schrodinger_residual(e: &GridField, density: &DensityField, c0: f64, k: f64) -> Result<f64> {
    check_dims(e.dims, 3)?;
    if !(k > 0.0) || !(c0 > 0.0) {
        return Err(Error::InvalidInput("k and c0 must be positive".into()));
    }
    let scale = k * k * e.max_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let worst = e
        .interior()
        .map(|idx| {
            let n = density.value_at(&e.center(idx));
            let q = k * k * c0 * n / (1.0 + c0 * n);
            let v = e.values[e.index(idx)];
            (-e.laplacian(idx) + v * Complex64::new(q - k * k, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}
