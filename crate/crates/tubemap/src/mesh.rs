//! Triangle mesh with precomputed adjacency and boundary structure.
//!
//! Faces are oriented counterclockwise as seen from outside the surface.
//! Construction validates that the face list describes an oriented 2-manifold
//! with boundary, which every later stage of the pipeline relies on.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// One oriented boundary loop.
///
/// `vertices` are listed in traversal order with the surface on the left
/// (i.e. following the direction in which each boundary edge appears in its
/// unique incident face). `edge_lengths[i]` is the length of the edge from
/// `vertices[i]` to `vertices[(i + 1) % len]`.
#[derive(Debug, Clone)]
pub struct BoundaryLoop {
    pub vertices: Vec<usize>,
    pub edge_lengths: Vec<f64>,
    pub total_length: f64,
}

impl BoundaryLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.contains(&v)
    }
}

/// Immutable oriented triangle mesh.
///
/// Invariants established at construction:
/// * every face references three distinct, in-range vertices;
/// * no directed edge appears twice (consistent orientation, edge-manifold);
/// * the faces incident to each vertex form a single fan (vertex-manifold);
/// * every vertex is used by at least one face.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    directed: HashMap<(usize, usize), usize>,
    n_edges: usize,
    boundary_vertex: Vec<bool>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let nv = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} references vertex {v}, but the mesh has {nv} vertices"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex: {f:?}"
                )));
            }
        }

        // Directed edge -> incident face. A directed edge appearing twice means
        // either inconsistent orientation or an edge shared by > 2 faces.
        let mut directed = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                if directed.insert((a, b), fi).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge ({a}, {b}) appears in two faces; \
                         orientation is inconsistent or the edge is non-manifold"
                    )));
                }
            }
        }

        let mut vertex_faces = vec![Vec::new(); nv];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        for (v, inc) in vertex_faces.iter().enumerate() {
            if inc.is_empty() {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} is not referenced by any face"
                )));
            }
        }

        let mut n_edges = 0usize;
        let mut neighbors = vec![Vec::new(); nv];
        let mut boundary_vertex = vec![false; nv];
        for (&(a, b), _) in directed.iter() {
            if a < b || !directed.contains_key(&(b, a)) {
                n_edges += 1;
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
            if !directed.contains_key(&(b, a)) {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
        }

        let mesh = TriMesh {
            vertices,
            faces,
            vertex_faces,
            neighbors,
            directed,
            n_edges,
            boundary_vertex,
        };
        mesh.check_vertex_fans()?;
        Ok(mesh)
    }

    /// Every vertex must have a single fan of faces around it: walk from one
    /// end of the fan (or anywhere, for interior vertices) and require that
    /// the walk covers all incident faces.
    fn check_vertex_fans(&self) -> Result<()> {
        for v in 0..self.vertices.len() {
            let inc = &self.vertex_faces[v];
            let start = inc[0];
            // Rewind to the fan's first face (or back to `start` if closed).
            let mut first = start;
            for _ in 0..inc.len() {
                match self.fan_prev(first, v) {
                    Some(f) if f != start => first = f,
                    _ => break,
                }
            }
            // Sweep forward and count.
            let mut count = 1;
            let mut cur = first;
            for _ in 0..inc.len() {
                match self.fan_next(cur, v) {
                    Some(f) if f != first => {
                        cur = f;
                        count += 1;
                    }
                    _ => break,
                }
            }
            if count != inc.len() {
                return Err(Error::InvalidMesh(format!(
                    "faces around vertex {v} do not form a single fan"
                )));
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn position(&self, v: usize) -> Point3<f64> {
        self.vertices[v]
    }

    /// Sorted one-ring vertex neighbors.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Face containing the directed edge (a, b), if any.
    pub fn face_with_directed_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.directed.get(&(a, b)).copied()
    }

    /// Whether `a` and `b` share an (undirected) edge.
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.directed.contains_key(&(a, b)) || self.directed.contains_key(&(b, a))
    }

    pub fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        self.directed.contains_key(&(a, b)) != self.directed.contains_key(&(b, a))
    }

    /// Vertex following `v` in face `f`'s cyclic order.
    pub fn next_in_face(&self, f: usize, v: usize) -> usize {
        let t = &self.faces[f];
        let k = t.iter().position(|&x| x == v).expect("vertex not in face");
        t[(k + 1) % 3]
    }

    /// Vertex preceding `v` in face `f`'s cyclic order.
    pub fn prev_in_face(&self, f: usize, v: usize) -> usize {
        let t = &self.faces[f];
        let k = t.iter().position(|&x| x == v).expect("vertex not in face");
        t[(k + 2) % 3]
    }

    /// Next face around `v`, crossing the edge {v, prev_in_face(f, v)}.
    pub fn fan_next(&self, f: usize, v: usize) -> Option<usize> {
        let p = self.prev_in_face(f, v);
        self.face_with_directed_edge(v, p)
    }

    /// Previous face around `v`, crossing the edge {v, next_in_face(f, v)}.
    pub fn fan_prev(&self, f: usize, v: usize) -> Option<usize> {
        let n = self.next_in_face(f, v);
        self.face_with_directed_edge(n, v)
    }

    pub fn face_corners(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [p0, p1, p2] = self.face_corners(f);
        (p1 - p0).cross(&(p2 - p0)).norm() * 0.5
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    /// Unnormalized face normal; its norm is twice the face area.
    pub fn face_normal_raw(&self, f: usize) -> Vector3<f64> {
        let [p0, p1, p2] = self.face_corners(f);
        (p1 - p0).cross(&(p2 - p0))
    }

    /// Area-weighted unit vertex normal.
    pub fn vertex_normal(&self, v: usize) -> Result<Vector3<f64>> {
        let mut n = Vector3::zeros();
        for &f in &self.vertex_faces[v] {
            n += self.face_normal_raw(f);
        }
        let len = n.norm();
        if len <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "vertex {v} has a vanishing area-weighted normal"
            )));
        }
        Ok(n / len)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        (self.vertices[a] - self.vertices[b]).norm()
    }

    /// Boundary loops, each traversed with the surface on the left, sorted by
    /// descending total length; loops whose lengths agree to within a 1e-9
    /// relative tolerance are ordered by their smallest vertex index instead.
    /// Traversal starts at the loop's smallest vertex index, so the result is
    /// deterministic.
    pub fn boundary_loops(&self) -> Vec<BoundaryLoop> {
        // Out-edge of each boundary vertex, in face direction: the directed
        // edge (a, b) that has no opposite (b, a).
        let mut out_edge: HashMap<usize, usize> = HashMap::new();
        for (&(a, b), _) in self.directed.iter() {
            if !self.directed.contains_key(&(b, a)) {
                out_edge.insert(a, b);
            }
        }
        let mut starts: Vec<usize> = out_edge.keys().copied().collect();
        starts.sort_unstable();

        let mut seen: HashMap<usize, bool> = HashMap::new();
        let mut loops = Vec::new();
        for &s in &starts {
            if seen.contains_key(&s) {
                continue;
            }
            let mut verts = vec![s];
            seen.insert(s, true);
            let mut cur = out_edge[&s];
            while cur != s {
                seen.insert(cur, true);
                verts.push(cur);
                cur = out_edge[&cur];
            }
            let m = verts.len();
            let edge_lengths: Vec<f64> = (0..m)
                .map(|i| self.edge_length(verts[i], verts[(i + 1) % m]))
                .collect();
            let total_length = edge_lengths.iter().sum();
            loops.push(BoundaryLoop {
                vertices: verts,
                edge_lengths,
                total_length,
            });
        }
        loops.sort_by(|a, b| b.total_length.partial_cmp(&a.total_length).unwrap());
        // Loops of equal geometric length can sum their edge lengths in
        // different orders, so their totals may differ by rounding noise.
        // Order near-equal loops by smallest vertex index instead, which is
        // stable under such noise.
        let near = |a: &BoundaryLoop, b: &BoundaryLoop| {
            (a.total_length - b.total_length).abs()
                <= 1e-9 * a.total_length.max(b.total_length)
        };
        let mut swapped = true;
        while swapped {
            swapped = false;
            for i in 1..loops.len() {
                if near(&loops[i - 1], &loops[i])
                    && loops[i].vertices[0] < loops[i - 1].vertices[0]
                {
                    loops.swap(i - 1, i);
                    swapped = true;
                }
            }
        }
        loops
    }

    pub fn mean_edge_length(&self) -> f64 {
        // Sum in ascending vertex order so the rounding of the total (and
        // hence the mean) is reproducible across identical meshes.
        let mut total = 0.0;
        let mut count = 0usize;
        for (a, nb) in self.neighbors.iter().enumerate() {
            for &b in nb {
                if a < b {
                    total += self.edge_length(a, b);
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    /// Euler characteristic V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.n_edges as i64 + self.faces.len() as i64
    }
}
