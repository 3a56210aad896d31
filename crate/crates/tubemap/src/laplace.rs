//! Cotangent Laplacian of a triangle mesh.
//!
//! The stiffness matrix K is symmetric positive semidefinite with
//! `K[i][j] = -(cot a_ij + cot b_ij)/2` for an interior edge {i, j} (one
//! cotangent for a boundary edge) and row sums zero. The pointwise Laplacian
//! uses the mixed one-third vertex areas: `(Lf)_i = -(K f)_i / A_i`.

use nalgebra::Point3;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub struct CotanOperator {
    stiffness: CsMat<f64>,
    vertex_areas: Vec<f64>,
}

/// Faces whose area falls below this fraction of the mesh's mean face area
/// are rejected as degenerate.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-12;

pub fn cotan_operator(mesh: &TriMesh) -> Result<CotanOperator> {
    let n = mesh.n_vertices();
    let areas = mesh.face_areas();
    let mean_area = areas.iter().sum::<f64>() / areas.len() as f64;
    let threshold = DEGENERATE_AREA_FRACTION * mean_area;

    let mut tri = TriMat::new((n, n));
    let mut vertex_areas = vec![0.0; n];
    for (fi, f) in mesh.faces().iter().enumerate() {
        if areas[fi] < threshold {
            return Err(Error::DegenerateFace {
                face: fi,
                area: areas[fi],
            });
        }
        let corners = mesh.face_corners(fi);
        for k in 0..3 {
            vertex_areas[f[k]] += areas[fi] / 3.0;
            // Corner k sits opposite edge {k+1, k+2}.
            let w = 0.5 * corner_cotan(&corners, k);
            let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            tri.add_triplet(a, b, -w);
            tri.add_triplet(b, a, -w);
            tri.add_triplet(a, a, w);
            tri.add_triplet(b, b, w);
        }
    }
    Ok(CotanOperator {
        stiffness: tri.to_csr(),
        vertex_areas,
    })
}

fn corner_cotan(corners: &[Point3<f64>; 3], k: usize) -> f64 {
    let p = corners[k];
    let u = corners[(k + 1) % 3] - p;
    let v = corners[(k + 2) % 3] - p;
    u.dot(&v) / u.cross(&v).norm()
}

impl CotanOperator {
    pub fn stiffness(&self) -> &CsMat<f64> {
        &self.stiffness
    }

    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    /// Pointwise Laplacian: `(Lf)_i = sum_j w_ij (f_j - f_i) / A_i`.
    pub fn apply_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for (v, row) in self.stiffness.outer_iterator().enumerate() {
            let mut acc = 0.0;
            for (j, &w) in row.iter() {
                acc += w * f[j];
            }
            out[v] = -acc / self.vertex_areas[v];
        }
        out
    }

    /// Stiffness quadratic form f' K f (nonnegative for any f).
    pub fn energy(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (v, row) in self.stiffness.outer_iterator().enumerate() {
            for (j, &w) in row.iter() {
                acc += f[v] * w * f[j];
            }
        }
        acc
    }
}
