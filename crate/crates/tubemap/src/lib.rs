//! Conformal tubular parameterization and toroidal bending of tube-like
//! triangle meshes.
//!
//! The library maps an open tube-like surface (a triangle mesh with exactly
//! two boundary loops) conformally onto a standard tube `S^1 x [0, L]`,
//! optionally after extending the boundary rings so the boundary can move
//! freely, corrects residual angular distortion concentrated along the cut
//! seam, and can post-compose closed-form conformal bending maps that wrap
//! the tube around a torus.
//!
//! Typical use:
//!
//! ```no_run
//! use tubemap::{io, tube};
//!
//! let mesh = io::load_mesh("tube.obj").unwrap();
//! let params = tube::FixedParams::default();
//! let (coords, report) = tube::parameterize_fixed(&mesh, &params).unwrap();
//! io::save_obj("tube_param.obj", &coords.positions(), mesh.faces()).unwrap();
//! println!("strip height {}", report.l_star);
//! ```

pub mod error;
pub mod mesh;
pub mod io;
pub mod laplace;
pub mod solve;
pub mod seam;
pub mod qc;
pub mod metrics;
pub mod tube;
pub mod extend;
pub mod bend;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use mesh::{BoundaryLoop, TriMesh};
