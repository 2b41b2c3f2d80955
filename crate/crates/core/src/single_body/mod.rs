//! One small perfectly conducting body: the boundary-integral oracle and the
//! closed-form small-size asymptotics it is checked against.

pub mod asymptotics;
pub mod bie;
pub mod mesh;
pub mod shape;

pub use asymptotics::{amplitude_from_q, asymptotic_amplitude, asymptotic_q};
pub use bie::{
    apply_t_alternative, assemble_bie, assemble_bie_bodies, compute_q, current_sources, gauss_identity_check,
    operator_norm_t, scattered_field, solve_current, t_matrix, BieSystem, SurfaceCurrent,
};
pub use mesh::{mesh_surface, SurfaceMesh};
pub use shape::ParticleShape;
