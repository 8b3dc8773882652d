//! Exact stationary flows of an ideal incompressible conducting fluid.
//!
//! The toolkit constructs velocity/magnetic-field pairs (v, B) with constant
//! total pressure P = p + |B|^2/2 from a curvilinear map x(k1, k2, k3) whose
//! first two coordinate lines are everywhere tangent to the two commuting
//! characteristic fields a = v - B and b = v + B.  Everything downstream
//! (symmetry transforms, current sheets, line extraction, verification)
//! operates on that map.
//!
//! Module layout:
//! - [`expr`]: small symbolic expression language (parse, evaluate,
//!   differentiate) used for all user-supplied scalar functions
//! - [`areamap`]: area-preserving planar maps (k2, k3) -> (tau2, tau3),
//!   closed-form or implicit via a generating potential
//! - [`flowmap`]: the curvilinear map and the fields it induces
//! - [`families`]: constant-total-pressure solution family builders
//! - [`transforms`]: symmetry transforms and current-sheet extraction
//! - [`verify`]: residual checks against the reduced system and the full
//!   momentum/induction/divergence equations, plus finite-difference audits
//! - [`geometry`]: streamlines, magnetic lines, surface meshes, export
//! - [`scene`]: JSON scene files tying the above together

pub mod areamap;
pub mod error;
pub mod expr;
pub mod families;
pub mod flowmap;
pub mod geometry;
pub mod linalg;
pub mod scene;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Vec3;
