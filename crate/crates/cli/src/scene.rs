//! Scene files: JSON descriptions of the incident wave, the particles and the
//! per-subcommand options.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use scatter_core::continuum::SelfVoxel;
use scatter_core::em::{CVec3, PlaneWave, Point, TRANSVERSALITY_TOL};
use scatter_core::ensemble::{Aabb, DensityField, ScalarGrid};
use scatter_core::linalg::IterativeOptions;
use scatter_core::many_body::SolveMethod;
use scatter_core::single_body::ParticleShape;

/// A validation problem, tagged with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneError(pub String);

impl std::fmt::Display for SceneError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SceneError {}

fn field_error(field: &str, msg: impl std::fmt::Display) -> SceneError {
    SceneError(format!("scene field `{field}`: {msg}"))
}

/// A polarization component: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Real(f64),
    Complex([f64; 2]),
}

impl Component {
    fn value(self) -> Complex64 {
        match self {
            Component::Real(re) => Complex64::new(re, 0.0),
            Component::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// Particle geometry; the size is set by the scene's `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere,
    /// Semi-axes up to scale; rescaled so the largest equals `a`.
    Ellipsoid { semi_axes: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DensitySpec {
    /// Particles per unit volume, uniform over `domain`.
    Constant(f64),
    /// Grid file, relative to the scene file; its box is the domain.
    File(PathBuf),
}

/// Probe points on a regular grid including both end points per axis
/// (a single point sits at the midpoint).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeGrid {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub dims: [usize; 3],
}

impl ProbeGrid {
    pub fn points(&self) -> Vec<Point> {
        let coord = |a: usize, i: usize| {
            if self.dims[a] == 1 {
                0.5 * (self.min[a] + self.max[a])
            } else {
                self.min[a] + (self.max[a] - self.min[a]) * i as f64 / (self.dims[a] - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.dims.iter().product());
        for l in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    out.push(Point::new(coord(0, i), coord(1, j), coord(2, l)));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub method: SolveMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub threads: Option<usize>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let o = IterativeOptions::default();
        Self {
            method: SolveMethod::Auto,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            restart: o.restart,
            threads: None,
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> IterativeOptions {
        IterativeOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            restart: self.restart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleBodySpec {
    /// Surface mesh refinement level.
    pub level: usize,
}

impl Default for SingleBodySpec {
    fn default() -> Self {
        Self { level: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSpec {
    pub cubes_per_side: usize,
    /// Run the full solve for comparison when `M` does not exceed this.
    pub compare_limit: usize,
}

impl Default for ReduceSpec {
    fn default() -> Self {
        Self {
            cubes_per_side: 4,
            compare_limit: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumSpec {
    /// Explicit voxel counts; otherwise `resolution` voxels along the longest side.
    pub dims: Option<[usize; 3]>,
    pub resolution: usize,
    pub self_voxel: SelfVoxel,
}

impl Default for ContinuumSpec {
    fn default() -> Self {
        Self {
            dims: None,
            resolution: 32,
            self_voxel: SelfVoxel::Lattice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    /// Target `n²` grid file, relative to the scene file.
    pub target: Option<PathBuf>,
    pub mu0: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { target: None, mu0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub ka: Vec<f64>,
    pub level: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            ka: vec![0.2, 0.1, 0.05, 0.025],
            level: 3,
        }
    }
}

fn default_shape() -> ShapeSpec {
    ShapeSpec::Sphere
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Wavenumber `k = ω√(εμ)`.
    pub k: f64,
    /// Incidence direction; normalized on load.
    pub direction: [f64; 3],
    pub polarization: [Component; 3],
    #[serde(default = "default_shape")]
    pub shape: ShapeSpec,
    /// Particle size (largest semi-axis).
    pub a: f64,
    /// Shape constant; defaults to `|D|/a³` of the shape.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub domain: Option<Aabb>,
    #[serde(default)]
    pub probes: Option<ProbeGrid>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub single_body: SingleBodySpec,
    #[serde(default)]
    pub reduce: ReduceSpec,
    #[serde(default)]
    pub continuum: ContinuumSpec,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
}

/// Parses scene text; syntax and type errors carry line and column.
pub fn parse(text: &str) -> Result<Scene, SceneError> {
    serde_json::from_str(text).map_err(|e| {
        SceneError(format!("scene parse error at line {} column {}: {e}", e.line(), e.column()))
    })
}

/// A validated scene with everything resolved into library types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub wave: PlaneWave,
    pub shape: ParticleShape,
    pub c0: f64,
    pub warnings: Vec<String>,
}

impl Scene {
    /// Checks the physical invariants and builds the incident wave and shape.
    pub fn resolve(&self) -> Result<Resolved, SceneError> {
        let mut warnings = Vec::new();
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(field_error("k", format!("wavenumber must be positive and finite, got {}", self.k)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(field_error("a", format!("particle size must be positive and finite, got {}", self.a)));
        }
        let dir = Point::from(self.direction);
        let norm = dir.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(field_error("direction", "incidence direction must be a nonzero finite vector"));
        }
        if (norm - 1.0).abs() > 1e-12 {
            warnings.push(format!("incidence direction had length {norm}; normalized"));
        }
        let amp = CVec3::new(self.polarization[0].value(), self.polarization[1].value(), self.polarization[2].value());
        if amp.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(field_error("polarization", "components must be finite"));
        }
        let (wave, along) = PlaneWave::projected(self.k, dir, amp).map_err(|e| {
            field_error("polarization", format!("{e} (transversality constraint E·alpha = 0)"))
        })?;
        if along > TRANSVERSALITY_TOL * amp.norm() {
            warnings.push(format!(
                "polarization had a longitudinal part |E·alpha| = {along:.3e}; projected onto the plane E·alpha = 0"
            ));
        }
        let shape = match self.shape {
            ShapeSpec::Sphere => ParticleShape::sphere(self.a),
            ShapeSpec::Ellipsoid { semi_axes } => ParticleShape::ellipsoid(semi_axes).map(|s| s.with_size(self.a)),
        }
        .map_err(|e| field_error("shape", e))?;
        let c0 = self.c0.unwrap_or_else(|| shape.shape_factor());
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(field_error("c0", format!("shape constant must be positive, got {c0}")));
        }
        if let Some(p) = &self.probes {
            if p.dims.iter().any(|d| *d == 0) || (0..3).any(|i| !(p.min[i] <= p.max[i])) {
                return Err(field_error("probes", "dims must be positive and min <= max on every axis"));
            }
        }
        Ok(Resolved { wave, shape, c0, warnings })
    }

    /// The density law; file paths are taken relative to `base`.
    pub fn density(&self, base: &Path) -> Result<DensityField, SceneError> {
        let spec = self
            .density
            .as_ref()
            .ok_or_else(|| field_error("density", "required by this subcommand"))?;
        match spec {
            DensitySpec::Constant(value) => {
                let domain = self.domain.ok_or_else(|| field_error("domain", "required with a constant density"))?;
                DensityField::constant(*value, domain).map_err(|e| field_error("density", e))
            }
            DensitySpec::File(path) => {
                let grid = ScalarGrid::read(&base.join(path)).map_err(|e| field_error("density", e))?;
                if let Some(d) = self.domain {
                    if d != grid.bbox {
                        return Err(field_error("domain", "differs from the box of the density grid file"));
                    }
                }
                DensityField::tabulated(grid).map_err(|e| field_error("density", e))
            }
        }
    }

    pub fn target_grid(&self, base: &Path) -> Result<ScalarGrid, SceneError> {
        let path = self
            .design
            .target
            .as_ref()
            .ok_or_else(|| field_error("design.target", "a target n^2 grid file is required"))?;
        ScalarGrid::read(&base.join(path)).map_err(|e| field_error("design.target", e))
    }

    /// Voxel counts for the continuum grid over `domain`, keeping voxels cubic.
    pub fn continuum_dims(&self, domain: &Aabb) -> Result<[usize; 3], SceneError> {
        if let Some(d) = self.continuum.dims {
            return Ok(d);
        }
        let l = domain.lengths();
        let longest = l.iter().cloned().fold(0.0, f64::max);
        let h = longest / self.continuum.resolution.max(1) as f64;
        let dims = l.map(|v| (v / h).round().max(1.0) as usize);
        if (0..3).any(|a| (l[a] / dims[a] as f64 - h).abs() > 1e-9 * h) {
            return Err(field_error(
                "continuum.resolution",
                format!("box lengths {l:?} are not commensurate with voxel side {h}; give continuum.dims explicitly"),
            ));
        }
        Ok(dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"k": 1.0, "direction": [0, 0, 2], "polarization": [1, [0, 0.5], 0], "a": 0.01}"#;

    #[test]
    fn minimal_scene_resolves() {
        let s = parse(MINIMAL).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.wave.direction(), Point::new(0.0, 0.0, 1.0));
        assert!((r.c0 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(s.single_body.level, 3);
    }

    #[test]
    fn longitudinal_polarization_is_projected_with_a_warning() {
        let s = parse(r#"{"k": 1.0, "direction": [0, 0, 1], "polarization": [1, 0, 0.1], "a": 0.01}"#).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.wave.amplitude()[2], Complex64::new(0.0, 0.0));
        assert!(r.warnings.iter().any(|w| w.contains("longitudinal")));
    }

    #[test]
    fn parallel_polarization_names_the_constraint() {
        let s = parse(r#"{"k": 1.0, "direction": [0, 0, 1], "polarization": [0, 0, 1], "a": 0.01}"#).unwrap();
        let e = s.resolve().unwrap_err();
        assert!(e.0.contains("polarization") && e.0.contains("E·alpha = 0"), "{e}");
    }

    #[test]
    fn parse_errors_locate_the_problem() {
        let e = parse("{\n  \"k\": 1.0,\n  \"direction\": [0, 0, 1],\n  \"polarisation\": [1, 0, 0]\n}").unwrap_err();
        assert!(e.0.contains("line 4") && e.0.contains("polarisation"), "{e}");
        let e = parse(r#"{"k": "one", "direction": [0, 0, 1], "polarization": [1, 0, 0], "a": 0.01}"#).unwrap_err();
        assert!(e.0.contains("line 1"), "{e}");
        let s = parse(r#"{"k": -1.0, "direction": [0, 0, 1], "polarization": [1, 0, 0], "a": 0.01}"#).unwrap();
        assert!(s.resolve().unwrap_err().0.contains("`k`"));
    }

    #[test]
    fn probe_grid_includes_end_points() {
        let p = ProbeGrid {
            min: [0.0, 0.0, 1.0],
            max: [1.0, 2.0, 1.0],
            dims: [2, 3, 1],
        };
        let pts = p.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], Point::new(0.0, 0.0, 1.0));
        assert_eq!(pts[5], Point::new(1.0, 2.0, 1.0));
    }

    #[test]
    fn continuum_dims_follow_the_box() {
        let mut s = parse(MINIMAL).unwrap();
        let dom = Aabb::new([0.0; 3], [1.0, 0.5, 0.25]).unwrap();
        s.continuum.resolution = 16;
        assert_eq!(s.continuum_dims(&dom).unwrap(), [16, 8, 4]);
        let odd = Aabb::new([0.0; 3], [1.0, 0.3, 1.0]).unwrap();
        s.continuum.resolution = 4;
        assert!(s.continuum_dims(&odd).is_err());
    }
}
