//! Vector fields sampled at voxel centres and the finite-difference stencils used
//! by the PDE residual checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::em::{CVec3, Point};
use crate::ensemble::{cell_center, Aabb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// The electric field `E`.
    Electric,
    /// The curl `W = ∇×E`.
    Curl,
}

/// One complex vector per voxel centre, stored x-fastest like [`crate::ensemble::ScalarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub dims: [usize; 3],
    pub bbox: Aabb,
    pub kind: FieldKind,
    pub values: Vec<CVec3>,
}

impl GridField {
    pub fn new(dims: [usize; 3], bbox: Aabb, kind: FieldKind, values: Vec<CVec3>) -> Result<Self> {
        let f = Self { dims, bbox, kind, values };
        f.validate()?;
        Ok(f)
    }

    pub fn from_fn(dims: [usize; 3], bbox: Aabb, kind: FieldKind, f: impl Fn(&Point) -> CVec3) -> Result<Self> {
        check_dims(dims, 2)?;
        bbox.validate()?;
        let n = dims.iter().product();
        let values = (0..n).map(|flat| f(&cell_center(&bbox, dims, unravel(dims, flat)))).collect();
        Self::new(dims, bbox, kind, values)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.dims, 2)?;
        self.bbox.validate()?;
        if self.values.len() != self.dims.iter().product::<usize>() {
            return Err(Error::InvalidInput(format!(
                "{} values for a {:?} grid",
                self.values.len(),
                self.dims
            )));
        }
        if let Some(i) = self.values.iter().position(|v| v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite field value at voxel {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        unravel(self.dims, flat)
    }

    pub fn spacing(&self) -> [f64; 3] {
        let l = self.bbox.lengths();
        [0, 1, 2].map(|a| l[a] / self.dims[a] as f64)
    }

    pub fn center(&self, idx: [usize; 3]) -> Point {
        cell_center(&self.bbox, self.dims, idx)
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|f| self.center(self.unravel(f))).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖₂ / ‖other‖₂` over matching voxels.
    pub fn relative_difference(&self, other: &GridField) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::InvalidInput(format!("grids {:?} and {:?} differ", self.dims, other.dims)));
        }
        let num: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_squared()).sum();
        let den: f64 = other.values.iter().map(|b| b.norm_squared()).sum();
        Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
    }

    /// Block means onto a coarser grid whose dims divide these.
    pub fn block_average(&self, coarse: [usize; 3]) -> Result<GridField> {
        if (0..3).any(|a| coarse[a] == 0 || self.dims[a] % coarse[a] != 0) {
            return Err(Error::InvalidInput(format!(
                "{:?} does not divide the grid {:?}",
                coarse, self.dims
            )));
        }
        let ratio = [0, 1, 2].map(|a| self.dims[a] / coarse[a]);
        let mut sums = vec![CVec3::zeros(); coarse.iter().product()];
        for (flat, v) in self.values.iter().enumerate() {
            let idx = self.unravel(flat);
            let c = [0, 1, 2].map(|a| idx[a] / ratio[a]);
            sums[c[0] + coarse[0] * (c[1] + coarse[1] * c[2])] += v;
        }
        let inv = Complex64::new(1.0 / ratio.iter().product::<usize>() as f64, 0.0);
        sums.iter_mut().for_each(|s| *s *= inv);
        Ok(GridField {
            dims: coarse,
            bbox: self.bbox,
            kind: self.kind,
            values: sums,
        })
    }

    /// Voxels at least one cell away from every face.
    pub(crate) fn interior(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (1..nz.saturating_sub(1))
            .flat_map(move |k| (1..ny.saturating_sub(1)).flat_map(move |j| (1..nx.saturating_sub(1)).map(move |i| [i, j, k])))
    }

    fn at(&self, idx: [usize; 3], axis: usize, step: isize) -> CVec3 {
        let mut m = idx;
        m[axis] = (idx[axis] as isize + step) as usize;
        self.values[self.index(m)]
    }

    /// Second-order central first derivative along `axis`.
    pub(crate) fn derivative(&self, idx: [usize; 3], axis: usize) -> CVec3 {
        let h = self.spacing()[axis];
        (self.at(idx, axis, 1) - self.at(idx, axis, -1)) / Complex64::new(2.0 * h, 0.0)
    }

    /// 7-point Laplacian.
    pub(crate) fn laplacian(&self, idx: [usize; 3]) -> CVec3 {
        let h = self.spacing();
        let c = self.values[self.index(idx)];
        let mut acc = CVec3::zeros();
        for a in 0..3 {
            acc += (self.at(idx, a, 1) + self.at(idx, a, -1) - c * Complex64::new(2.0, 0.0)) / Complex64::new(h[a] * h[a], 0.0);
        }
        acc
    }

    pub(crate) fn curl(&self, idx: [usize; 3]) -> CVec3 {
        let d = [0, 1, 2].map(|a| self.derivative(idx, a));
        CVec3::new(d[1].z - d[2].y, d[2].x - d[0].z, d[0].y - d[1].x)
    }

    /// `∇(∇·E)` with central differences; mixed terms use the 4-point cross stencil.
    pub(crate) fn grad_div(&self, idx: [usize; 3]) -> CVec3 {
        let h = self.spacing();
        let mut out = CVec3::zeros();
        for a in 0..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..3 {
                acc += if a == b {
                    let c = self.values[self.index(idx)][a];
                    (self.at(idx, a, 1)[a] + self.at(idx, a, -1)[a] - 2.0 * c) / (h[a] * h[a])
                } else {
                    let v = |sa: isize, sb: isize| {
                        let mut m = idx;
                        m[a] = (idx[a] as isize + sa) as usize;
                        m[b] = (idx[b] as isize + sb) as usize;
                        self.values[self.index(m)][b]
                    };
                    (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / (4.0 * h[a] * h[b])
                };
            }
            out[a] = acc;
        }
        out
    }

    /// `∇×∇×E = ∇(∇·E) − ∇²E`.
    pub(crate) fn curl_curl(&self, idx: [usize; 3]) -> CVec3 {
        self.grad_div(idx) - self.laplacian(idx)
    }
}

pub(crate) fn unravel(dims: [usize; 3], flat: usize) -> [usize; 3] {
    [flat % dims[0], (flat / dims[0]) % dims[1], flat / (dims[0] * dims[1])]
}

pub(crate) fn check_dims(dims: [usize; 3], needed: usize) -> Result<()> {
    if dims.iter().any(|n| *n < needed) {
        return Err(Error::GridTooSmall { needed, got: dims });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{plane_wave_curl, plane_wave_field, PlaneWave};

    fn wave() -> PlaneWave {
        PlaneWave::new(
            1.3,
            Point::new(0.0, 0.6, 0.8),
            CVec3::new(Complex64::new(1.0, 0.2), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        )
        .unwrap()
    }

    #[test]
    fn stencils_on_plane_wave() {
        let pw = wave();
        let k = pw.k();
        let errs: Vec<(f64, f64, f64)> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let f = GridField::from_fn([n; 3], Aabb::unit_cube(), FieldKind::Electric, |x| plane_wave_field(&pw, x)).unwrap();
                let mut worst = (0.0f64, 0.0f64, 0.0f64);
                for idx in f.interior() {
                    let e = f.values[f.index(idx)];
                    let x = f.center(idx);
                    worst.0 = worst.0.max((f.laplacian(idx) + e * Complex64::new(k * k, 0.0)).norm());
                    worst.1 = worst.1.max((f.curl(idx) - plane_wave_curl(&pw, &x)).norm());
                    // transverse wave: ∇∇·E = 0, so curl curl E = k² E
                    worst.2 = worst.2.max((f.curl_curl(idx) - e * Complex64::new(k * k, 0.0)).norm());
                }
                worst
            })
            .collect();
        for w in errs.windows(2) {
            for (c, f) in [(w[0].0, w[1].0), (w[0].1, w[1].1), (w[0].2, w[1].2)] {
                let ratio = c / f;
                assert!((3.6..4.4).contains(&ratio), "second-order ratio {ratio}");
            }
        }
    }

    #[test]
    fn block_average_and_validation() {
        let f = GridField::from_fn([4, 4, 4], Aabb::unit_cube(), FieldKind::Curl, |x| {
            CVec3::new(Complex64::new(x.x, 0.0), Complex64::new(0.0, x.y), Complex64::new(x.z, x.z))
        })
        .unwrap();
        let c = f.block_average([2, 2, 2]).unwrap();
        // linear fields average to the coarse centre values
        let exact = GridField::from_fn([2, 2, 2], Aabb::unit_cube(), FieldKind::Curl, |x| {
            CVec3::new(Complex64::new(x.x, 0.0), Complex64::new(0.0, x.y), Complex64::new(x.z, x.z))
        })
        .unwrap();
        assert!(c.relative_difference(&exact).unwrap() < 1e-15);
        assert!(f.block_average([3, 2, 2]).is_err());
        assert!(matches!(
            GridField::new([1, 4, 4], Aabb::unit_cube(), FieldKind::Electric, vec![CVec3::zeros(); 16]),
            Err(Error::GridTooSmall { .. })
        ));
        let mut bad = f.clone();
        bad.values[3].x = Complex64::new(f64::NAN, 0.0);
        assert!(bad.validate().is_err());
    }
}
