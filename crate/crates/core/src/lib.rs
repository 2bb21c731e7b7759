//! Tolerance analysis of planar assemblies with form errors.
//!
//! Surface deviations are described by their coefficients in a modal shape
//! basis of the nominal surface. Two mating surfaces are assembled by finding
//! the convex-hull facet of their difference pierced by the mating-force axis,
//! the resulting small-displacement torsor is checked against the functional
//! requirement domain, and Monte Carlo batches give non-conformity rates.
//!
//! Axis convention: the surface normal is `y`, the plane axes are `x` and `z`.
//! A rigid torsor `(T_y, R_x, R_z)` about a point `c` displaces the surface
//! point `(x, z)` by `T_y + R_z (x - x_c) - R_x (z - z_c)` along `y`.

pub mod error;
pub mod mesh;
pub mod modal;

pub use error::{Error, Result};
pub mod signature;
pub mod kinematics;
pub mod hull;
pub mod contact;
pub mod batch;
