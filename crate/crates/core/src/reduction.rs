//! Order reduction: one representative per cube of a regular partition of the
//! domain, weighted by the particle mass `N(x_p)|Δ_p|` the cube contains.

use crate::em::{CVec3, PlaneWave, Point};
use crate::ensemble::{count_in_region, Aabb, Ensemble};
use crate::error::{Error, Result};
use crate::linalg::IterativeOptions;
use crate::many_body::{solve_system, DipoleSystem, ScatterSolution, SolveMethod};

#[derive(Debug, Clone, PartialEq)]
pub struct CubePartition {
    pub per_side: usize,
    pub cubes: Vec<Aabb>,
    pub centers: Vec<Point>,
    /// Particles per cube, from the ensemble.
    pub counts: Vec<usize>,
    /// `N(x_p)|Δ_p|` from the density law.
    pub weights: Vec<f64>,
    /// `a³ · count_p` for comparison with `weights`.
    pub particle_mass: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CubePartition {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Largest cube side.
    pub fn side(&self) -> f64 {
        self.cubes.first().map_or(0.0, |c| c.lengths().into_iter().fold(0.0, f64::max))
    }

    /// `|Σ a³ count_p − Σ w_p| / Σ w_p`.
    pub fn mass_mismatch(&self) -> f64 {
        let w: f64 = self.weights.iter().sum();
        let m: f64 = self.particle_mass.iter().sum();
        if w > 0.0 {
            (m - w).abs() / w
        } else {
            m
        }
    }
}

/// Splits the ensemble's domain into `per_side³` equal boxes.
pub fn partition(ens: &Ensemble, per_side: usize) -> Result<CubePartition> {
    if per_side < 1 {
        return Err(Error::InvalidInput("cubes per side must be at least 1".into()));
    }
    let p = per_side.pow(3);
    let dom = ens.domain;
    let mut warnings = Vec::new();
    if p > ens.len() {
        return Err(Error::InvalidInput(format!("{p} cubes exceed the {} particles", ens.len())));
    }
    if 8 * p > ens.len() {
        warnings.push(format!("P = {p} is not small compared with M = {}", ens.len()));
    }
    let a3 = ens.a().powi(3);
    let mut part = CubePartition {
        per_side,
        cubes: Vec::with_capacity(p),
        centers: Vec::with_capacity(p),
        counts: Vec::with_capacity(p),
        weights: Vec::with_capacity(p),
        particle_mass: Vec::with_capacity(p),
        warnings,
    };
    for k in 0..per_side {
        for j in 0..per_side {
            for i in 0..per_side {
                let cube = dom.cell([per_side; 3], [i, j, k]);
                let center = cube.center();
                let count = count_upper_closed(ens, &cube, &dom);
                part.weights.push(ens.density.value_at(&center) * cube.volume());
                part.particle_mass.push(a3 * count as f64);
                part.counts.push(count);
                part.centers.push(center);
                part.cubes.push(cube);
            }
        }
    }
    let side = part.side();
    if ens.spacing.is_finite() && side < 4.0 * ens.spacing {
        part.warnings
            .push(format!("cube side {side:.3e} is below four particle spacings ({:.3e})", 4.0 * ens.spacing));
    }
    for w in &part.warnings {
        log::warn!("{w}");
    }
    Ok(part)
}

/// Half-open count, closing the cube on faces that coincide with the domain's upper faces.
fn count_upper_closed(ens: &Ensemble, cube: &Aabb, dom: &Aabb) -> usize {
    let mut grown = *cube;
    for a in 0..3 {
        if cube.max[a] >= dom.max[a] {
            grown.max[a] = f64::INFINITY;
        }
    }
    count_in_region(ens, &grown)
}

/// Solves the `P`-body system with weights `c₀ w_p`. Probes are excluded within `b/2`.
pub fn reduced_solve(part: &CubePartition, pw: &PlaneWave, c0: f64, method: SolveMethod) -> Result<ScatterSolution> {
    reduced_solve_with(part, pw, c0, method, &IterativeOptions::default())
}

pub fn reduced_solve_with(
    part: &CubePartition,
    pw: &PlaneWave,
    c0: f64,
    method: SolveMethod,
    opts: &IterativeOptions,
) -> Result<ScatterSolution> {
    if !(c0 > 0.0) {
        return Err(Error::InvalidInput(format!("shape constant must be positive, got {c0}")));
    }
    let weights = part.weights.iter().map(|w| c0 * w).collect();
    let system = DipoleSystem::new(pw.k(), part.centers.clone(), weights)?;
    let half = part.cubes.iter().flat_map(|c| c.lengths()).fold(f64::INFINITY, f64::min) / 2.0;
    solve_system(system, pw, half, method, opts)
}

/// `E₀(x) − c₀ Σ_p w_p ∇g(x, x_p) × A_p`.
pub fn reduced_field_at(sol: &ScatterSolution, x: &Point) -> Result<CVec3> {
    sol.field_at(x)
}

/// Mean of the full-system curls over the particles of each cube.
pub fn cube_averages(part: &CubePartition, full: &ScatterSolution) -> Vec<CVec3> {
    let mut sums = vec![CVec3::zeros(); part.len()];
    let mut counts = vec![0usize; part.len()];
    let n = part.per_side;
    let dom = part.cubes.iter().fold(part.cubes[0], |acc, c| Aabb {
        min: [0, 1, 2].map(|a| acc.min[a].min(c.min[a])),
        max: [0, 1, 2].map(|a| acc.max[a].max(c.max[a])),
    });
    let l = dom.lengths();
    for (x, a) in full.system.points.iter().zip(&full.curls) {
        let idx = [0, 1, 2].map(|ax| (((x[ax] - dom.min[ax]) / l[ax] * n as f64).floor().max(0.0) as usize).min(n - 1));
        let flat = idx[0] + n * (idx[1] + n * idx[2]);
        sums[flat] += a;
        counts[flat] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { s / num_complex::Complex64::new(*c as f64, 0.0) } else { *s })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::plane_wave_field;
    use crate::ensemble::{place_particles, DensityField};
    use crate::many_body::solve;
    use crate::single_body::ParticleShape;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    const C0: f64 = 4.0 * PI / 3.0;

    fn wave() -> PlaneWave {
        PlaneWave::new(
            1.0,
            Point::new(0.6, 0.0, 0.8),
            CVec3::new(Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.3), Complex64::new(-0.6, 0.0)),
        )
        .unwrap()
    }

    fn lattice_ensemble(n_side: usize, a: f64) -> Ensemble {
        // N d³ = a³ with d = 1/n_side
        let n = (a * n_side as f64).powi(3);
        let density = DensityField::constant(n, Aabb::unit_cube()).unwrap();
        place_particles(&density, &ParticleShape::sphere(a).unwrap()).unwrap()
    }

    #[test]
    fn partition_counts() {
        let ens = lattice_ensemble(8, 0.01);
        assert_eq!(ens.len(), 512);
        let one = partition(&ens, 1).unwrap();
        assert_eq!(one.counts, vec![512]);
        let two = partition(&ens, 2).unwrap();
        assert!(two.counts.iter().all(|c| *c == 64));
        for (m, w) in two.particle_mass.iter().zip(&two.weights) {
            assert!((m - w).abs() <= 1e-12 * w);
        }
        assert!(two.mass_mismatch() < 1e-12);
        assert!(partition(&ens, 0).is_err());
        assert!(partition(&ens, 9).is_err());
    }

    #[test]
    fn one_particle_per_cube_reproduces_full_system() {
        let ens = lattice_ensemble(6, 0.01);
        let part = partition(&ens, 6).unwrap();
        let pw = wave();
        let full = solve(&ens, &pw, C0, SolveMethod::Direct).unwrap();
        let red = reduced_solve(&part, &pw, C0, SolveMethod::Direct).unwrap();
        for (p, x) in part.centers.iter().zip(&full.system.points) {
            assert!((p - x).norm() < 1e-14);
        }
        let num: f64 = full.curls.iter().zip(&red.curls).map(|(a, b)| (a - b).norm_squared()).sum();
        let den: f64 = full.curls.iter().map(|a| a.norm_squared()).sum();
        assert!((num / den).sqrt() <= 1e-12);
    }

    #[test]
    fn empty_weights_leave_incident_field() {
        let ens = lattice_ensemble(4, 0.01);
        let mut part = partition(&ens, 2).unwrap();
        part.weights.iter_mut().for_each(|w| *w = 0.0);
        let pw = wave();
        let sol = reduced_solve(&part, &pw, C0, SolveMethod::Direct).unwrap();
        let x = Point::new(2.0, 0.5, 0.5);
        assert_eq!(reduced_field_at(&sol, &x).unwrap(), plane_wave_field(&pw, &x));
        let dark = reduced_solve(&partition(&ens, 2).unwrap(), &pw.scaled(Complex64::new(0.0, 0.0)), C0, SolveMethod::Direct).unwrap();
        assert!(dark.curls.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn reduced_curls_track_cube_averages() {
        let ens = lattice_ensemble(8, 0.02);
        let pw = wave();
        let full = solve(&ens, &pw, C0, SolveMethod::Direct).unwrap();
        let part = partition(&ens, 2).unwrap();
        let red = reduced_solve(&part, &pw, C0, SolveMethod::Direct).unwrap();
        let avg = cube_averages(&part, &full);
        let num: f64 = avg.iter().zip(&red.curls).map(|(a, b)| (a - b).norm_squared()).sum();
        let den: f64 = avg.iter().map(|a| a.norm_squared()).sum();
        assert!((num / den).sqrt() <= 0.1);
    }
}
