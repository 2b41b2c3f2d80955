//! Particle configurations realizing a prescribed density law: about
//! `a⁻³ ∫_Δ N dx` particles in every subdomain `Δ`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::Point;
use crate::error::{Error, Result};
use crate::single_body::ParticleShape;

/// Largest admissible `ka + a/d`.
pub const REGIME_THRESHOLD: f64 = 0.2;

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Aabb { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn unit_cube() -> Self {
        Aabb {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.max[i] > self.min[i]) || !self.min[i].is_finite() || !self.max[i].is_finite() {
                return Err(Error::InvalidInput(format!("degenerate box {self:?}")));
            }
        }
        Ok(())
    }

    pub fn lengths(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.max[i] - self.min[i])
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn center(&self) -> Point {
        Point::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Half-open membership `[min, max)`, so that tilings count each point once.
    pub fn contains_half_open(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] < self.max[i])
    }

    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|i| (self.max[i].min(other.max[i]) - self.min[i].max(other.min[i])).max(0.0))
            .product()
    }

    /// Distance from `p` to the box (zero inside).
    pub fn distance(&self, p: &Point) -> f64 {
        (0..3)
            .map(|i| (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Radius of the smallest sphere about the centre containing the box.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.lengths().iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Sub-box `(i, j, k)` of a regular `n[0] × n[1] × n[2]` split.
    pub fn cell(&self, n: [usize; 3], idx: [usize; 3]) -> Aabb {
        let l = self.lengths();
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            let h = l[a] / n[a] as f64;
            min[a] = self.min[a] + idx[a] as f64 * h;
            max[a] = if idx[a] + 1 == n[a] {
                self.max[a]
            } else {
                self.min[a] + (idx[a] + 1) as f64 * h
            };
        }
        Aabb { min, max }
    }
}

/// Cell-centred samples on a regular grid over a box, stored x-fastest.
///
/// This is also the on-disk grid format:
/// `{"dims": [nx, ny, nz], "box": {"min": [..], "max": [..]}, "values": [..]}`
/// where `values[i + nx*(j + ny*k)]` belongs to the cell centre
/// `min + (i+½, j+½, k+½) ⊙ (max − min)/dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    #[serde(rename = "box")]
    pub bbox: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: [usize; 3], bbox: Aabb, values: Vec<f64>) -> Result<Self> {
        let g = ScalarGrid { dims, bbox, values };
        g.validate()?;
        Ok(g)
    }

    pub fn from_fn(dims: [usize; 3], bbox: Aabb, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(&cell_center(&bbox, dims, [i, j, k])));
                }
            }
        }
        Self::new(dims, bbox, values)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput(format!("grid dims must be positive, got {:?}", self.dims)));
        }
        let n: usize = self.dims.iter().product();
        if self.values.len() != n {
            return Err(Error::InvalidInput(format!(
                "grid has {} values but dims {:?} need {n}",
                self.values.len(),
                self.dims
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("grid value {i} is not finite")));
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
        let i = flat % self.dims[0];
        let j = (flat / self.dims[0]) % self.dims[1];
        [i, j, flat / (self.dims[0] * self.dims[1])]
    }

    pub fn spacing(&self) -> [f64; 3] {
        let l = self.bbox.lengths();
        [0, 1, 2].map(|a| l[a] / self.dims[a] as f64)
    }

    pub fn center(&self, idx: [usize; 3]) -> Point {
        cell_center(&self.bbox, self.dims, idx)
    }

    /// Trilinear interpolation between cell centres, constant extrapolation
    /// within half a cell of the box faces. Zero outside the box.
    pub fn value_at(&self, p: &Point) -> f64 {
        if !self.bbox.contains(p) {
            return 0.0;
        }
        let h = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = ((p[a] - self.bbox.min[a]) / h[a] - 0.5).clamp(0.0, (self.dims[a] - 1) as f64);
            let i0 = (t.floor() as usize).min(self.dims[a].saturating_sub(2));
            base[a] = i0;
            frac[a] = if self.dims[a] == 1 { 0.0 } else { t - i0 as f64 };
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if up && self.dims[a] == 1 {
                    w = 0.0;
                }
                idx[a] = (base[a] + usize::from(up)).min(self.dims[a] - 1);
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.values[self.index(idx)];
            }
        }
        acc
    }

    /// Midpoint-rule integral over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing().iter().product::<f64>()
    }

    /// Integral of the piecewise-constant cell values over `region`.
    pub fn integral_over(&self, region: &Aabb) -> f64 {
        let mut acc = 0.0;
        let h = self.spacing();
        let range = |a: usize| {
            let lo = ((region.min[a] - self.bbox.min[a]) / h[a]).floor().max(0.0) as usize;
            let hi = (((region.max[a] - self.bbox.min[a]) / h[a]).ceil().max(0.0) as usize).min(self.dims[a]);
            lo..hi
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let cell = self.bbox.cell(self.dims, [i, j, k]);
                    acc += self.values[self.index([i, j, k])] * cell.intersection_volume(region);
                }
            }
        }
        acc
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read grid file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: ScalarGrid = serde_json::from_str(text).map_err(|e| {
            Error::InvalidInput(format!("grid file line {} column {}: {e}", e.line(), e.column()))
        })?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }
}

pub(crate) fn cell_center(bbox: &Aabb, dims: [usize; 3], idx: [usize; 3]) -> Point {
    let l = bbox.lengths();
    Point::from_fn(|a, _| bbox.min[a] + (idx[a] as f64 + 0.5) * l[a] / dims[a] as f64)
}

/// Particle density `N(x) ≥ 0` on the domain box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensityField {
    Constant { value: f64, domain: Aabb },
    Tabulated { grid: ScalarGrid },
}

impl DensityField {
    pub fn constant(value: f64, domain: Aabb) -> Result<Self> {
        let d = DensityField::Constant { value, domain };
        d.validate()?;
        Ok(d)
    }

    pub fn tabulated(grid: ScalarGrid) -> Result<Self> {
        let d = DensityField::Tabulated { grid };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensityField::Constant { value, domain } => {
                domain.validate()?;
                if !(*value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidInput(format!("density must be non-negative, got {value}")));
                }
            }
            DensityField::Tabulated { grid } => {
                grid.validate()?;
                if let Some(i) = grid.values.iter().position(|v| *v < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "density must be non-negative; cell {i} holds {}",
                        grid.values[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Aabb {
        match self {
            DensityField::Constant { domain, .. } => *domain,
            DensityField::Tabulated { grid } => grid.bbox,
        }
    }

    /// `N(x)`, zero outside the domain.
    pub fn value_at(&self, p: &Point) -> f64 {
        match self {
            DensityField::Constant { value, domain } => {
                if domain.contains(p) {
                    *value
                } else {
                    0.0
                }
            }
            DensityField::Tabulated { grid } => grid.value_at(p),
        }
    }

    pub fn integral(&self) -> f64 {
        match self {
            DensityField::Constant { value, domain } => value * domain.volume(),
            DensityField::Tabulated { grid } => grid.integral(),
        }
    }

    pub fn integral_over(&self, region: &Aabb) -> f64 {
        match self {
            DensityField::Constant { value, domain } => value * domain.intersection_volume(region),
            DensityField::Tabulated { grid } => grid.integral_over(region),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            DensityField::Constant { value, .. } => *value,
            DensityField::Tabulated { grid } => grid.values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Samples `N` at the cell centres of a `dims` grid over the domain.
    pub fn sample(&self, dims: [usize; 3]) -> Result<ScalarGrid> {
        ScalarGrid::from_fn(dims, self.domain(), |p| self.value_at(p))
    }

    /// Same law with every value multiplied by `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        match self {
            DensityField::Constant { value, domain } => Self::constant(value * s, *domain),
            DensityField::Tabulated { grid } => {
                let mut g = grid.clone();
                g.values.iter_mut().for_each(|v| *v *= s);
                Self::tabulated(g)
            }
        }
    }
}

/// `round(a⁻³ ∫_Ω N dx)`.
pub fn predicted_count(density: &DensityField, a: f64) -> Result<usize> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("particle size must be positive, got {a}")));
    }
    let total = density.integral();
    if total <= 0.0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok((total / a.powi(3)).round() as usize)
}

/// Particle centres sharing one shape, placed in a domain according to a density law.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub centers: Vec<Point>,
    pub shape: ParticleShape,
    pub domain: Aabb,
    pub density: DensityField,
    /// Smallest centre-to-centre distance (infinite for a single particle).
    pub spacing: f64,
}

impl Ensemble {
    /// Wraps explicit centres after checking containment and separation.
    pub fn from_centers(centers: Vec<Point>, shape: ParticleShape, density: DensityField) -> Result<Self> {
        shape.validate()?;
        if centers.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let domain = density.domain();
        if let Some(i) = centers.iter().position(|c| !domain.contains(c)) {
            return Err(Error::InvalidInput(format!("particle {i} at {:?} lies outside the domain", centers[i])));
        }
        let spacing = match nearest_pair(&centers) {
            Some((d, i, j)) => {
                if d <= 1e-12 * domain.circumradius() {
                    return Err(Error::DuplicateCenters(i, j));
                }
                d
            }
            None => f64::INFINITY,
        };
        if spacing <= 2.0 * shape.size() {
            return Err(Error::InfeasiblePacking {
                spacing,
                two_a: 2.0 * shape.size(),
            });
        }
        Ok(Ensemble {
            centers,
            shape,
            domain,
            density,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn a(&self) -> f64 {
        self.shape.size()
    }

    /// Fails with [`Error::RegimeViolation`] unless the regime check passes or `allow` is set.
    pub fn require_regime(&self, k: f64, allow: bool) -> Result<RegimeReport> {
        let rep = validate_regime(self, k);
        if !rep.pass {
            if allow {
                log::warn!(
                    "regime score ka + a/d = {:.3} exceeds {REGIME_THRESHOLD}; continuing on request",
                    rep.score
                );
            } else {
                return Err(Error::RegimeViolation {
                    score: rep.score,
                    threshold: REGIME_THRESHOLD,
                    ka: rep.ka,
                    a_over_d: rep.a_over_d,
                });
            }
        }
        Ok(rep)
    }
}

/// Deterministic stratified placement.
///
/// A constant density yields the cubic lattice of spacing `a/N^{1/3}`,
/// centred in the domain. A tabulated density is split into coarse blocks.
/// Each block receives `round(a⁻³ ∫_Δ N)` particles at centres of a uniform
/// sub-grid, which are taken in a spread-out order.
pub fn place_particles(density: &DensityField, shape: &ParticleShape) -> Result<Ensemble> {
    density.validate()?;
    let a = shape.size();
    let predicted = predicted_count(density, a)?;
    let domain = density.domain();
    let centers = match density {
        DensityField::Constant { value, .. } => lattice(&domain, a / value.cbrt()),
        DensityField::Tabulated { grid } => {
            let per_block = 27.0;
            let target = ((predicted as f64 / per_block).cbrt().floor() as usize).max(1);
            let blocks = grid.dims.map(|n| n.min(target).max(1));
            let mut centers = Vec::with_capacity(predicted);
            for k in 0..blocks[2] {
                for j in 0..blocks[1] {
                    for i in 0..blocks[0] {
                        let block = domain.cell(blocks, [i, j, k]);
                        let count = (density.integral_over(&block) / a.powi(3)).round() as usize;
                        fill_block(&block, count, &mut centers);
                    }
                }
            }
            centers
        }
    };
    if centers.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let realized = centers.len() as f64;
    if (realized - predicted as f64).abs() > 0.05 * predicted as f64 {
        log::warn!("placed {realized} particles, predicted {predicted}");
    }
    Ensemble::from_centers(centers, *shape, density.clone())
}

/// Cubic lattice of spacing `d` centred in the box, `round(L/d)` points per axis.
pub fn lattice(domain: &Aabb, d: f64) -> Vec<Point> {
    let l = domain.lengths();
    let n = l.map(|li| ((li / d).round() as usize).max(1));
    let offset = [0, 1, 2].map(|a| domain.min[a] + 0.5 * (l[a] - n[a] as f64 * d) + 0.5 * d);
    let mut out = Vec::with_capacity(n.iter().product());
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                out.push(Point::new(
                    offset[0] + i as f64 * d,
                    offset[1] + j as f64 * d,
                    offset[2] + k as f64 * d,
                ));
            }
        }
    }
    out
}

fn fill_block(block: &Aabb, count: usize, out: &mut Vec<Point>) {
    if count == 0 {
        return;
    }
    let n = (count as f64).cbrt().ceil() as usize;
    let total = n * n * n;
    let mut cells: Vec<(u64, usize)> = (0..total).map(|c| (spread_key(c as u64), c)).collect();
    cells.sort_unstable();
    for &(_, c) in cells.iter().take(count) {
        let idx = [c % n, (c / n) % n, c / (n * n)];
        out.push(block.cell([n; 3], idx).center());
    }
}

/// Bit reversal, so consecutive picks are far apart in the sub-grid.
fn spread_key(c: u64) -> u64 {
    c.reverse_bits()
}

/// Closest pair of points, by bucketing into cells of the expected spacing.
pub fn nearest_pair(points: &[Point]) -> Option<(f64, usize, usize)> {
    if points.len() < 2 {
        return None;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let vol = ext.iter().filter(|e| **e > 0.0).product::<f64>();
    let dims_used = ext.iter().filter(|e| **e > 0.0).count().max(1);
    let mut cell = (vol / points.len() as f64).powf(1.0 / dims_used as f64);
    if ext.max() > 0.0 {
        cell = cell.clamp(ext.max() / 1e6, ext.max());
    } else {
        cell = 1.0;
    }
    loop {
        let key = |p: &Point| -> [i64; 3] { [0, 1, 2].map(|a| ((p[a] - lo[a]) / cell).floor() as i64) };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            let kk = key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = buckets.get(&[kk[0] + dx, kk[1] + dy, kk[2] + dz]) {
                            for &j in list {
                                if j <= i {
                                    continue;
                                }
                                let d = (points[j] - p).norm();
                                if best.is_none_or(|b| d < b.0) {
                                    best = Some((d, i, j));
                                }
                            }
                        }
                    }
                }
            }
        }
        // a pair found within the neighbourhood is the global minimum only if
        // it is shorter than the bucket size
        match best {
            Some(b) if b.0 <= cell => return Some(b),
            _ => cell *= 4.0,
        }
    }
}

/// Number of centres in the half-open box `region`.
pub fn count_in_region(ens: &Ensemble, region: &Aabb) -> usize {
    ens.centers.iter().filter(|c| region.contains_half_open(c)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub ka: f64,
    pub a_over_d: f64,
    pub score: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Smallness of `ka + a/d` that the dipole approximation relies on.
pub fn validate_regime(ens: &Ensemble, k: f64) -> RegimeReport {
    regime_report(k, ens.a(), ens.spacing)
}

pub fn regime_report(k: f64, a: f64, spacing: f64) -> RegimeReport {
    let ka = k * a;
    let a_over_d = if spacing.is_finite() { a / spacing } else { 0.0 };
    let score = ka + a_over_d;
    RegimeReport {
        ka,
        a_over_d,
        score,
        threshold: REGIME_THRESHOLD,
        pass: score <= REGIME_THRESHOLD,
    }
}
