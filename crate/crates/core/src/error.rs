use thiserror::Error;

/// Errors produced by the scattering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Kernel evaluated at (numerically) coincident points.
    #[error("coincident points: |x - y| = {distance:e} is below the coincidence guard")]
    CoincidentPoints { distance: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty mesh")]
    EmptyMesh,

    #[error("empty ensemble: the density integrates to zero over the domain")]
    EmptyEnsemble,

    /// Packing cannot honour the non-overlap condition d > 2a.
    #[error("infeasible packing: nearest-neighbour distance {spacing:e} must exceed 2a = {two_a:e}")]
    InfeasiblePacking { spacing: f64, two_a: f64 },

    #[error("regime check failed: ka + a/d = {score:.4} exceeds {threshold} (ka = {ka:.4}, a/d = {a_over_d:.4})")]
    RegimeViolation {
        score: f64,
        threshold: f64,
        ka: f64,
        a_over_d: f64,
    },

    #[error("duplicate particle centres at indices {0} and {1}")]
    DuplicateCenters(usize, usize),

    #[error("probe point is {distance:e} from particle {index}, inside the exclusion radius {radius:e}")]
    ProbeTooClose {
        index: usize,
        distance: f64,
        radius: f64,
    },

    #[error("ill-conditioned system: condition estimate {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("iterative solver did not converge after {iterations} iterations (last relative residual {:e})", .history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, history: Vec<f64> },

    #[error("grid too small: need at least {needed} voxels per axis, got {got:?}")]
    GridTooSmall { needed: usize, got: [usize; 3] },

    /// Design target outside the reachable range 0 < n^2 <= 1.
    #[error("infeasible refraction target at {} voxel(s); first offending voxels: {:?}", .voxels.len(), &.voxels[..voxels.len().min(8)])]
    InfeasibleTarget { voxels: Vec<(usize, f64)> },
}

pub type Result<T> = std::result::Result<T, Error>;
