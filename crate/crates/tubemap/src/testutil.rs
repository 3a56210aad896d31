//! Procedural meshes shared by the unit tests.

use nalgebra::Point3;

use crate::mesh::TriMesh;

/// Open tube around the z-axis: `n_u` columns, `n_z` rows, radius `r`,
/// height `h`. Faces are counterclockwise seen from outside.
pub fn cylinder_grid(n_u: usize, n_z: usize, r: f64, h: f64) -> TriMesh {
    let mut vertices = Vec::new();
    for k in 0..n_z {
        let z = h * k as f64 / (n_z - 1) as f64;
        for j in 0..n_u {
            let u = std::f64::consts::TAU * j as f64 / n_u as f64;
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), z));
        }
    }
    let v = |j: usize, k: usize| k * n_u + j % n_u;
    let mut faces = Vec::new();
    for k in 0..n_z - 1 {
        for j in 0..n_u {
            faces.push([v(j, k), v(j + 1, k), v(j + 1, k + 1)]);
            faces.push([v(j, k), v(j + 1, k + 1), v(j, k + 1)]);
        }
    }
    TriMesh::new(vertices, faces).unwrap()
}

/// Planar grid of `nx` x `ny` unit cells scaled by `s`, each cell split along
/// the (+1, +1) diagonal, in the xy-plane with +z normals. Returns the mesh
/// and an index function `(i, j) -> vertex`.
pub fn planar_grid(nx: usize, ny: usize, s: f64) -> (TriMesh, impl Fn(usize, usize) -> usize) {
    let w = nx + 1;
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point3::new(s * i as f64, s * j as f64, 0.0));
        }
    }
    let idx = move |i: usize, j: usize| j * w + i;
    let mut faces = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    (TriMesh::new(vertices, faces).unwrap(), idx)
}

pub fn single_triangle(corners: &[[f64; 3]; 3]) -> TriMesh {
    let vertices = corners
        .iter()
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect();
    TriMesh::new(vertices, vec![[0, 1, 2]]).unwrap()
}
