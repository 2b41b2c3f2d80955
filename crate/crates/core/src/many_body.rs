//! Effective-field linear system for many small bodies in the dipole regime.
//!
//! Unknowns are the curls `A_j = (∇×E_e)(x_j)` of the field acting on each
//! body. Body `m` carries the moment `Q_m = −w_m A_m`, where `w_m = c₀a³` for
//! physical particles and `c₀ N(x_p)|Δ_p|` for cube representatives.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{dipole_kernel_unchecked, plane_wave_curl, plane_wave_field, rcross, CVec3, PlaneWave, Point};
use crate::ensemble::{nearest_pair, Ensemble};
use crate::error::{Error, Result};
use crate::linalg::{norm2, relative_residual, solve_iterative, DenseLu, InteractionOperator, IterativeOptions, SolveReport};
use crate::radiation::DipoleSources;

/// Largest body count for which a dense matrix is formed.
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Iterative,
    /// Direct up to [`DENSE_LIMIT`] bodies, iterative above.
    #[default]
    Auto,
}

/// Weighted point dipoles interacting through the curl-curl kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleSystem {
    pub k: f64,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl DipoleSystem {
    pub fn new(k: f64, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput("points and weights differ in length".into()));
        }
        if let Some((d, i, j)) = nearest_pair(&points) {
            let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(d);
            if d <= 1e-12 * scale {
                return Err(Error::DuplicateCenters(i, j));
            }
        }
        Ok(Self { k, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `A₀_j = (∇×E₀)(x_j)`, flattened.
    pub fn rhs(&self, pw: &PlaneWave) -> Vec<Complex64> {
        self.points.iter().flat_map(|x| {
            let c = plane_wave_curl(pw, x);
            [c.x, c.y, c.z]
        })
        .collect()
    }

    /// `(I + G)` as a dense `3M × 3M` matrix.
    pub fn dense(&self) -> Mat<Complex64> {
        let m = self.len();
        let mut a = Mat::<Complex64>::zeros(3 * m, 3 * m);
        let cols: Vec<Vec<Complex64>> = (0..3 * m)
            .into_par_iter()
            .map(|col| {
                let mut e = CVec3::zeros();
                e[col % 3] = Complex64::new(1.0, 0.0);
                let src = col / 3;
                let mut out = vec![Complex64::new(0.0, 0.0); 3 * m];
                for j in 0..m {
                    if j == src {
                        out[col] = Complex64::new(1.0, 0.0);
                        continue;
                    }
                    let d = self.points[j] - self.points[src];
                    let v = dipole_kernel_unchecked(self.k, &d, d.norm(), &e) * Complex64::new(self.weights[src], 0.0);
                    out[3 * j..3 * j + 3].copy_from_slice(&[v.x, v.y, v.z]);
                }
                out
            })
            .collect();
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                a[(r, c)] = *v;
            }
        }
        a
    }

    /// Solves `(I + G) A = rhs`.
    pub fn solve(&self, rhs: &[Complex64], method: SolveMethod, opts: &IterativeOptions) -> Result<(Vec<CVec3>, SolveReport)> {
        let m = self.len();
        if m == 0 {
            return Ok((Vec::new(), SolveReport::default()));
        }
        let direct = match method {
            SolveMethod::Direct => {
                if m > DENSE_LIMIT {
                    return Err(Error::InvalidInput(format!(
                        "direct solve limited to {DENSE_LIMIT} bodies, got {m}; use the iterative method"
                    )));
                }
                true
            }
            SolveMethod::Iterative => false,
            SolveMethod::Auto => m <= DENSE_LIMIT,
        };
        let (x, report) = if m == 1 {
            let report = SolveReport {
                method: "trivial".into(),
                ..Default::default()
            };
            (rhs.to_vec(), report)
        } else if direct {
            let lu = DenseLu::new(&self.dense());
            let x = lu.solve(rhs);
            let residual = relative_residual(self, &x, rhs);
            let report = SolveReport {
                method: "direct".into(),
                iterations: 0,
                residual,
                history: vec![residual],
                contraction: None,
                condition: Some(lu.condition_estimate()),
            };
            (x, report)
        } else {
            solve_iterative(self, rhs, opts)?
        };
        let curls = x.chunks_exact(3).map(|c| CVec3::new(c[0], c[1], c[2])).collect();
        Ok((curls, report))
    }
}

impl InteractionOperator for DipoleSystem {
    fn dim(&self) -> usize {
        3 * self.len()
    }

    /// `(G A)_j = Σ_{m≠j} w_m (k² g + ∇∇g)(x_j, x_m) A_m`, parallel over `j`
    /// with a fixed serial order in `m`.
    fn apply_interaction(&self, x: &[Complex64], out: &mut [Complex64]) {
        let k = self.k;
        let sources: Vec<CVec3> = x
            .chunks_exact(3)
            .zip(&self.weights)
            .map(|(c, w)| CVec3::new(c[0], c[1], c[2]) * Complex64::new(*w, 0.0))
            .collect();
        out.par_chunks_mut(3).enumerate().for_each(|(j, o)| {
            let xj = self.points[j];
            let mut acc = CVec3::zeros();
            for (m, (y, s)) in self.points.iter().zip(&sources).enumerate() {
                if m == j {
                    continue;
                }
                let d = xj - y;
                acc += dipole_kernel_unchecked(k, &d, d.norm(), s);
            }
            o.copy_from_slice(&[acc.x, acc.y, acc.z]);
        });
    }
}

/// Solved system together with everything needed to evaluate fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSolution {
    pub incident: PlaneWave,
    pub system: DipoleSystem,
    pub curls: Vec<CVec3>,
    /// Probes closer than this to a body are rejected.
    pub exclusion_radius: f64,
    pub report: SolveReport,
}

/// Solves the effective-field system for an ensemble of identical particles.
pub fn solve(ens: &Ensemble, pw: &PlaneWave, c0: f64, method: SolveMethod) -> Result<ScatterSolution> {
    solve_with(ens, pw, c0, method, &IterativeOptions::default())
}

pub fn solve_with(
    ens: &Ensemble,
    pw: &PlaneWave,
    c0: f64,
    method: SolveMethod,
    opts: &IterativeOptions,
) -> Result<ScatterSolution> {
    if !(c0 > 0.0) {
        return Err(Error::InvalidInput(format!("shape constant must be positive, got {c0}")));
    }
    let w = c0 * ens.a().powi(3);
    let system = DipoleSystem::new(pw.k(), ens.centers.clone(), vec![w; ens.len()])?;
    solve_system(system, pw, 2.0 * ens.a(), method, opts)
}

/// Solves a prepared system and checks the residual contract.
pub fn solve_system(
    system: DipoleSystem,
    pw: &PlaneWave,
    exclusion_radius: f64,
    method: SolveMethod,
    opts: &IterativeOptions,
) -> Result<ScatterSolution> {
    if (system.k - pw.k()).abs() > 1e-15 * pw.k() {
        return Err(Error::InvalidInput("system and incident wave use different wavenumbers".into()));
    }
    let rhs = system.rhs(pw);
    let (curls, report) = system.solve(&rhs, method, opts)?;
    if report.residual > 1e-8 {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            history: report.history.clone(),
        });
    }
    Ok(ScatterSolution {
        incident: *pw,
        system,
        curls,
        exclusion_radius,
        report,
    })
}

impl ScatterSolution {
    pub fn k(&self) -> f64 {
        self.system.k
    }

    /// `Q_j = −w_j A_j`.
    pub fn moments(&self) -> Vec<CVec3> {
        self.curls
            .iter()
            .zip(&self.system.weights)
            .map(|(a, w)| -a * Complex64::new(*w, 0.0))
            .collect()
    }

    /// The scattered field as point sources `∇g × Q_m`.
    pub fn sources(&self) -> DipoleSources {
        DipoleSources {
            positions: self.system.points.clone(),
            moments: self.moments(),
        }
    }

    fn check_probe(&self, x: &Point, skip: Option<usize>) -> Result<()> {
        for (i, p) in self.system.points.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let d = (x - p).norm();
            if d < self.exclusion_radius {
                return Err(Error::ProbeTooClose {
                    index: i,
                    distance: d,
                    radius: self.exclusion_radius,
                });
            }
        }
        Ok(())
    }

    /// `E(x) = E₀(x) − Σ_m w_m ∇g(x, x_m) × A_m`.
    pub fn field_at(&self, x: &Point) -> Result<CVec3> {
        self.check_probe(x, None)?;
        Ok(plane_wave_field(&self.incident, x) + self.partial_sum(x, None))
    }

    /// Field acting on body `exclude`: the total field without its own contribution.
    pub fn effective_field_at(&self, x: &Point, exclude: usize) -> Result<CVec3> {
        if exclude >= self.system.len() {
            return Err(Error::InvalidInput(format!("no body with index {exclude}")));
        }
        self.check_probe(x, Some(exclude))?;
        Ok(plane_wave_field(&self.incident, x) + self.partial_sum(x, Some(exclude)))
    }

    fn partial_sum(&self, x: &Point, skip: Option<usize>) -> CVec3 {
        let k = self.k();
        let mut acc = CVec3::zeros();
        for (m, ((y, a), w)) in self.system.points.iter().zip(&self.curls).zip(&self.system.weights).enumerate() {
            if Some(m) == skip {
                continue;
            }
            let d = x - y;
            let grad = crate::em::green_gradient_unchecked(k, &d, d.norm());
            acc -= grad.cross(a) * Complex64::new(*w, 0.0);
        }
        acc
    }

    /// `−(ik/4π) Σ_m w_m e^{−ikβ·x_m} β × A_m`.
    pub fn far_field_amplitude(&self, beta: &Point) -> CVec3 {
        let k = self.k();
        let mut acc = CVec3::zeros();
        for ((y, a), w) in self.system.points.iter().zip(&self.curls).zip(&self.system.weights) {
            acc += rcross(beta, a) * Complex64::from_polar(*w, -k * beta.dot(y));
        }
        acc * Complex64::new(0.0, -k / (4.0 * PI))
    }

    /// Relative residual `‖A₀ − (I+G)A‖ / ‖A₀‖` of the stored solution.
    pub fn residual(&self) -> f64 {
        let x: Vec<Complex64> = self.curls.iter().flat_map(|c| [c.x, c.y, c.z]).collect();
        let b = self.system.rhs(&self.incident);
        if norm2(&b) == 0.0 {
            return norm2(&x);
        }
        relative_residual(&self.system, &x, &b)
    }
}
