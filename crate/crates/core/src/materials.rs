//! Effective material parameters of a particle suspension, their inversion for
//! design, and the curl-curl residual of a computed field.
//!
//! A density `N(x)` of small perfect conductors with shape constant `c₀` acts
//! like a medium with `n²(x) = 1/(1 + c₀N(x))` and permeability
//! `μ(x) = μ₀/(1 + c₀N(x))`. Perfect conductors can only lower `n²`.

use num_complex::Complex64;
use serde::Serialize;

use crate::continuum::GridField;
use crate::em::{cvec, CVec3, Point};
use crate::ensemble::{DensityField, ScalarGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialSpec {
    /// Refraction coefficient `n²`, dimensionless.
    pub n2: ScalarGrid,
    /// Permeability in the units of `mu0`.
    pub mu: ScalarGrid,
    pub mu0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Permeability {
    pub mu: ScalarGrid,
    /// `∇μ/μ = −c₀∇N/(1 + c₀N)` per grid cell.
    pub gradient_ratio: Vec<Point>,
}

/// The density on its own grid; a constant density becomes a single cell.
fn native_grid(density: &DensityField) -> Result<ScalarGrid> {
    density.validate()?;
    match density {
        DensityField::Constant { value, domain } => ScalarGrid::new([1, 1, 1], *domain, vec![*value]),
        DensityField::Tabulated { grid } => Ok(grid.clone()),
    }
}

fn check_c0(c0: f64) -> Result<()> {
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::InvalidInput(format!("shape constant must be positive, got {c0}")));
    }
    Ok(())
}

/// `n²(x) = 1/(1 + c₀N(x))` on the density's grid.
pub fn refraction_from_density(density: &DensityField, c0: f64) -> Result<ScalarGrid> {
    check_c0(c0)?;
    let mut g = native_grid(density)?;
    g.values.iter_mut().for_each(|n| *n = 1.0 / (1.0 + c0 * *n));
    Ok(g)
}

/// `μ(x) = μ₀/(1 + c₀N(x))` and `∇μ/μ` by finite differences of `N`.
pub fn permeability_from_density(density: &DensityField, c0: f64, mu0: f64) -> Result<Permeability> {
    check_c0(c0)?;
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return Err(Error::InvalidInput(format!("background permeability must be positive, got {mu0}")));
    }
    let n = native_grid(density)?;
    let grad = fd_gradient(&n);
    let gradient_ratio = n
        .values
        .iter()
        .zip(&grad)
        .map(|(v, g)| g * (-c0 / (1.0 + c0 * v)))
        .collect();
    let mut mu = n;
    mu.values.iter_mut().for_each(|v| *v = mu0 / (1.0 + c0 * *v));
    Ok(Permeability { mu, gradient_ratio })
}

pub fn material_spec(density: &DensityField, c0: f64, mu0: f64) -> Result<MaterialSpec> {
    Ok(MaterialSpec {
        n2: refraction_from_density(density, c0)?,
        mu: permeability_from_density(density, c0, mu0)?.mu,
        mu0,
    })
}

/// Central differences in the interior, one-sided at the faces, zero along
/// axes with a single cell.
pub fn fd_gradient(grid: &ScalarGrid) -> Vec<Point> {
    let h = grid.spacing();
    (0..grid.len())
        .map(|flat| {
            let idx = grid.unravel(flat);
            Point::from_fn(|a, _| {
                let n = grid.dims[a];
                if n < 2 {
                    return 0.0;
                }
                let at = |i: usize| {
                    let mut m = idx;
                    m[a] = i;
                    grid.values[grid.index(m)]
                };
                let i = idx[a];
                if i == 0 {
                    (at(1) - at(0)) / h[a]
                } else if i + 1 == n {
                    (at(i) - at(i - 1)) / h[a]
                } else {
                    (at(i + 1) - at(i - 1)) / (2.0 * h[a])
                }
            })
        })
        .collect()
}

/// Inverts `n² = 1/(1 + c₀N)` cell by cell: `N = (1/n² − 1)/c₀`.
///
/// Fails with [`Error::InfeasibleTarget`] listing every cell with `n² > 1`,
/// `n² ≤ 0` or a non-finite target.
pub fn density_for_target(n2: &ScalarGrid, c0: f64) -> Result<DensityField> {
    check_c0(c0)?;
    n2.bbox.validate()?;
    if n2.values.len() != n2.dims.iter().product::<usize>() {
        return Err(Error::InvalidInput(format!("{} values for a {:?} grid", n2.values.len(), n2.dims)));
    }
    let bad: Vec<(usize, f64)> = n2
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| !(**v > 0.0 && **v <= 1.0))
        .map(|(i, v)| (i, *v))
        .collect();
    if !bad.is_empty() {
        return Err(Error::InfeasibleTarget { voxels: bad });
    }
    let mut grid = n2.clone();
    grid.values.iter_mut().for_each(|v| *v = (1.0 / *v - 1.0) / c0);
    DensityField::tabulated(grid)
}

/// Right side of `∇×∇×E = k²/(1+c₀N) E − c₀/(1+c₀N) ∇N × ∇×E`.
pub fn density_form_rhs(k: f64, c0: f64, n: f64, grad_n: &Point, e: &CVec3, curl_e: &CVec3) -> CVec3 {
    let s = 1.0 / (1.0 + c0 * n);
    e * Complex64::new(k * k * s, 0.0) - cvec(grad_n).cross(curl_e) * Complex64::new(c0 * s, 0.0)
}

/// Right side of `∇×∇×E = K²E + (∇μ/μ) × ∇×E` with `K² = k² μ/μ₀`.
pub fn permeability_form_rhs(k: f64, mu0: f64, mu: f64, grad_mu: &Point, e: &CVec3, curl_e: &CVec3) -> CVec3 {
    e * Complex64::new(k * k * mu / mu0, 0.0) + cvec(&(grad_mu / mu)).cross(curl_e)
}

/// `max |∇×∇×E − K²E − (∇μ/μ) × ∇×E| / (k² max|E|)` over interior voxels,
/// with `N` sampled at the voxel centres and differenced on the same grid.
pub fn curlcurl_residual(e: &GridField, density: &DensityField, c0: f64, k: f64) -> Result<f64> {
    check_c0(c0)?;
    if !(k > 0.0) {
        return Err(Error::InvalidInput(format!("wavenumber must be positive, got {k}")));
    }
    if e.dims.iter().any(|n| *n < 3) {
        return Err(Error::GridTooSmall { needed: 3, got: e.dims });
    }
    let scale = k * k * e.max_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let n = ScalarGrid::from_fn(e.dims, e.bbox, |x| density.value_at(x))?;
    let grad = fd_gradient(&n);
    let worst = e
        .interior()
        .map(|idx| {
            let v = e.index(idx);
            let rhs = density_form_rhs(k, c0, n.values[v], &grad[v], &e.values[v], &e.curl(idx));
            (e.curl_curl(idx) - rhs).norm()
        })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::{schrodinger_residual, solve_continuum, FieldKind};
    use crate::em::{plane_wave_field, PlaneWave};
    use crate::ensemble::Aabb;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const C0: f64 = 4.0 * PI / 3.0;

    fn bump_grid(dims: [usize; 3], amplitude: f64) -> ScalarGrid {
        ScalarGrid::from_fn(dims, Aabb::unit_cube(), |x| {
            amplitude * (-(x - Point::new(0.5, 0.5, 0.5)).norm_squared() / 0.08).exp()
        })
        .unwrap()
    }

    fn wave(k: f64) -> PlaneWave {
        PlaneWave::new(
            k,
            Point::new(0.0, 0.0, 1.0),
            CVec3::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(0.0, 0.0)),
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let empty = DensityField::constant(0.0, Aabb::unit_cube()).unwrap();
        assert_eq!(refraction_from_density(&empty, C0).unwrap().values, vec![1.0]);
        let p = permeability_from_density(&empty, C0, 2.0).unwrap();
        assert_eq!(p.mu.values, vec![2.0]);
        assert_eq!(p.gradient_ratio, vec![Point::zeros()]);
        let half = DensityField::constant(3.0 / (4.0 * PI), Aabb::unit_cube()).unwrap();
        assert!((refraction_from_density(&half, C0).unwrap().values[0] - 0.5).abs() < 1e-15);
        assert!(refraction_from_density(&half, 0.0).is_err());
        assert!(permeability_from_density(&half, C0, -1.0).is_err());
    }

    #[test]
    fn permeability_tracks_refraction() {
        let d = DensityField::tabulated(bump_grid([6, 5, 4], 0.3)).unwrap();
        let n2 = refraction_from_density(&d, C0).unwrap();
        let p = permeability_from_density(&d, C0, 1.7).unwrap();
        for (m, n) in p.mu.values.iter().zip(&n2.values) {
            assert!((m / 1.7 - n).abs() <= 1e-14);
            assert!(*n > 0.0 && *n <= 1.0);
        }
        // constant tabulated density has a vanishing gradient
        let flat = ScalarGrid::from_fn([4, 4, 4], Aabb::unit_cube(), |_| 0.2).unwrap();
        let p = permeability_from_density(&DensityField::tabulated(flat).unwrap(), C0, 1.0).unwrap();
        assert!(p.gradient_ratio.iter().all(|g| g.norm() < 1e-14));
    }

    #[test]
    fn gradient_stencil_is_exact_on_linear_data() {
        let g = ScalarGrid::from_fn([5, 3, 4], Aabb::unit_cube(), |x| 2.0 * x.x - x.y + 0.5 * x.z).unwrap();
        for v in fd_gradient(&g) {
            assert!((v - Point::new(2.0, -1.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn inversion_examples() {
        let one = ScalarGrid::from_fn([2, 2, 2], Aabb::unit_cube(), |_| 1.0).unwrap();
        assert!(density_for_target(&one, C0).unwrap().max_value() == 0.0);
        let half = ScalarGrid::from_fn([2, 2, 2], Aabb::unit_cube(), |_| 0.5).unwrap();
        let d = density_for_target(&half, C0).unwrap();
        assert!((d.max_value() - 3.0 / (4.0 * PI)).abs() < 1e-15);
        let mut bad = half.clone();
        bad.values[3] = 1.5;
        bad.values[5] = 0.0;
        match density_for_target(&bad, C0) {
            Err(Error::InfeasibleTarget { voxels }) => assert_eq!(voxels, vec![(3, 1.5), (5, 0.0)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_wave_curlcurl_residual_is_second_order() {
        let pw = wave(1.5);
        let empty = DensityField::constant(0.0, Aabb::unit_cube()).unwrap();
        let r: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let e = GridField::from_fn([n; 3], Aabb::unit_cube(), FieldKind::Electric, |x| plane_wave_field(&pw, x)).unwrap();
                curlcurl_residual(&e, &empty, C0, 1.5).unwrap()
            })
            .collect();
        for w in r.windows(2) {
            assert!((3.6..4.4).contains(&(w[0] / w[1])), "{r:?}");
        }
    }

    #[test]
    fn constant_density_solution_matches_schrodinger_form() {
        let density = DensityField::constant(1e-3, Aabb::unit_cube()).unwrap();
        let sol = solve_continuum(&density, &wave(1.0), C0, [16; 3]).unwrap();
        let cc = curlcurl_residual(&sol.electric, &density, C0, 1.0).unwrap();
        let sch = schrodinger_residual(&sol.electric, &density, C0, 1.0).unwrap();
        assert!(cc <= 5e-2 && sch <= 5e-2, "{cc} {sch}");
    }

    #[test]
    fn bump_density_solution_residual_decreases() {
        let density = DensityField::tabulated(bump_grid([32; 3], 2e-2)).unwrap();
        let r: Vec<f64> = [8usize, 16]
            .iter()
            .map(|&n| {
                let sol = solve_continuum(&density, &wave(1.0), C0, [n; 3]).unwrap();
                curlcurl_residual(&sol.electric, &density, C0, 1.0).unwrap()
            })
            .collect();
        assert!(r[1] < r[0] && r[1] <= 1e-1, "{r:?}");
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(values in proptest::collection::vec(1e-6f64..=1.0, 8)) {
            let target = ScalarGrid::new([2, 2, 2], Aabb::unit_cube(), values).unwrap();
            let d = density_for_target(&target, C0).unwrap();
            let back = refraction_from_density(&d, C0).unwrap();
            for (a, b) in back.values.iter().zip(&target.values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-12);
            }
        }

        /// The density and permeability forms of the curl-curl equation agree pointwise.
        #[test]
        fn both_curlcurl_forms_agree(
            n in 0.0f64..5.0,
            g in proptest::array::uniform3(-10.0f64..10.0),
            e in proptest::array::uniform6(-1.0f64..1.0),
            w in proptest::array::uniform6(-1.0f64..1.0),
            k in 0.1f64..5.0,
            mu0 in 0.5f64..2.0,
        ) {
            let grad_n = Point::from(g);
            let ev = CVec3::new(Complex64::new(e[0], e[1]), Complex64::new(e[2], e[3]), Complex64::new(e[4], e[5]));
            let wv = CVec3::new(Complex64::new(w[0], w[1]), Complex64::new(w[2], w[3]), Complex64::new(w[4], w[5]));
            let mu = mu0 / (1.0 + C0 * n);
            let grad_mu = grad_n * (-mu0 * C0 / (1.0 + C0 * n).powi(2));
            let a = density_form_rhs(k, C0, n, &grad_n, &ev, &wv);
            let b = permeability_form_rhs(k, mu0, mu, &grad_mu, &ev, &wv);
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }

        #[test]
        fn refraction_decreases_with_density(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assume!(a < b);
            let dom = Aabb::unit_cube();
            let na = refraction_from_density(&DensityField::constant(a, dom).unwrap(), C0).unwrap().values[0];
            let nb = refraction_from_density(&DensityField::constant(b, dom).unwrap(), C0).unwrap().values[0];
            prop_assert!(nb < na && nb > 0.0 && na <= 1.0);
        }
    }
}
