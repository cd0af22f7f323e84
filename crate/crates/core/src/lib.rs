//! Dynamics of developable ribbons in ruling-bending coordinates.
//!
//! A ribbon of length `l` and width `w` is cut into `n` elements by creases
//! that all cross the centerline. The configuration is the list of crease
//! slopes `c` and bending angles `psi` (plus an optional floating rigid
//! frame). Every configuration reconstructs to a mesh that is exactly
//! isometric to the flat strip, so developability holds by construction.
//!
//! Each timestep solves an implicit-Euler variational problem over these
//! coordinates with a bound-constrained quasi-Newton solver wrapped in an
//! augmented Lagrangian, then resolves contacts with a stiffened QP.

pub mod bench;
pub mod collision;
pub mod constraints;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod parallel;
pub mod presets;
pub mod scene;
pub mod solver;

pub use error::{Error, Result};
pub use model::{FrameMode, GeneralizedCoords, RibbonSpec, SubstitutedCoords};

/// Short alias used throughout for world-space 3-vectors.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Homogeneous 4x4 transform.
pub type Mat4 = nalgebra::Matrix4<f64>;
