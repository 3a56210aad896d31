//! Seam computation, cutting a tube open into a disk, and gluing per-vertex
//! data back across the cut.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLoop, TriMesh};

/// A simple vertex path from one boundary loop to the other. The first vertex
/// lies on the start loop, the last on the end loop, and every intermediate
/// vertex is strictly interior.
#[derive(Debug, Clone)]
pub struct CutSeam {
    pub path: Vec<usize>,
    pub length: f64,
}

/// Shortest seam between two boundary loops, by total Euclidean edge length.
///
/// All vertices of `from` act as sources simultaneously (equivalent to a
/// zero-weight virtual source). Interior vertices are the only permitted
/// intermediates. Equal-length candidates are resolved by lexicographic
/// comparison of the vertex-index paths, which makes the result independent
/// of hash-map iteration order.
pub fn shortest_seam(
    mesh: &TriMesh,
    from: &BoundaryLoop,
    to: &BoundaryLoop,
) -> Result<CutSeam> {
    let n = mesh.n_vertices();
    let mut on_from = vec![false; n];
    let mut on_to = vec![false; n];
    for &v in &from.vertices {
        on_from[v] = true;
    }
    for &v in &to.vertices {
        if on_from[v] {
            return Err(Error::InvalidSeam(format!(
                "vertex {v} lies on both boundary loops"
            )));
        }
        on_to[v] = true;
    }

    #[derive(PartialEq)]
    struct Entry {
        dist: f64,
        vertex: usize,
    }
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            // Min-heap: larger distance = lower priority.
            other
                .dist
                .partial_cmp(&self.dist)
                .unwrap()
                .then_with(|| other.vertex.cmp(&self.vertex))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &v in &from.vertices {
        dist[v] = 0.0;
        heap.push(Entry { dist: 0.0, vertex: v });
    }

    let path_of = |parent: &[Option<usize>], mut v: usize| -> Vec<usize> {
        let mut p = vec![v];
        while let Some(u) = parent[v] {
            p.push(u);
            v = u;
        }
        p.reverse();
        p
    };

    while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
        if settled[v] || d > dist[v] {
            continue;
        }
        settled[v] = true;
        if on_to[v] {
            continue; // target loop vertices never expand
        }
        for &u in mesh.neighbors(v) {
            if settled[u] || on_from[u] {
                continue;
            }
            // Boundary vertices other than the target loop cannot be
            // intermediates (covers any additional loops and re-entry).
            if mesh.is_boundary_vertex(u) && !on_to[u] {
                continue;
            }
            let nd = d + mesh.edge_length(v, u);
            match nd.partial_cmp(&dist[u]).unwrap() {
                Ordering::Less => {
                    dist[u] = nd;
                    parent[u] = Some(v);
                    heap.push(Entry { dist: nd, vertex: u });
                }
                Ordering::Equal => {
                    let mut candidate = path_of(&parent, v);
                    candidate.push(u);
                    if candidate < path_of(&parent, u) {
                        parent[u] = Some(v);
                    }
                }
                Ordering::Greater => {}
            }
        }
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for &t in &to.vertices {
        if !dist[t].is_finite() {
            continue;
        }
        let p = path_of(&parent, t);
        match &best {
            None => best = Some((dist[t], p)),
            Some((bd, bp)) => {
                if dist[t] < *bd || (dist[t] == *bd && p < *bp) {
                    best = Some((dist[t], p));
                }
            }
        }
    }
    let (length, path) = best.ok_or(Error::Disconnected)?;
    Ok(CutSeam { path, length })
}

/// A tube cut open along a seam into a topological disk.
///
/// Vertices `0..original_vertex_count` of `mesh` are the input vertices in
/// their original order; the seam copies follow, one per seam vertex in path
/// order. `twins[i]` pairs each original seam vertex with its copy.
/// `loop0`/`loop1` are the input mesh's boundary loops containing the seam's
/// first/last vertex (indices still valid in the cut mesh).
#[derive(Debug, Clone)]
pub struct CutMesh {
    pub mesh: TriMesh,
    pub original_vertex_count: usize,
    pub seam: CutSeam,
    pub twins: Vec<(usize, usize)>,
    pub loop0: BoundaryLoop,
    pub loop1: BoundaryLoop,
}

/// Cut a two-loop tube open along `seam`, duplicating the seam vertices.
///
/// Faces on one side of the seam (side B, found by fan walks) are relabeled
/// to the duplicates; face geometry is untouched and original vertex indices
/// keep their meaning. The result must be a disk (Euler characteristic 1,
/// single boundary loop) or the cut is rejected.
pub fn cut_along_seam(mesh: &TriMesh, seam: &CutSeam) -> Result<CutMesh> {
    let path = &seam.path;
    if path.len() < 2 {
        return Err(Error::InvalidSeam("seam needs at least two vertices".into()));
    }
    let mut unique = HashSet::new();
    for &v in path {
        if v >= mesh.n_vertices() {
            return Err(Error::InvalidSeam(format!("vertex {v} out of range")));
        }
        if !unique.insert(v) {
            return Err(Error::InvalidSeam(format!("vertex {v} repeats in the seam")));
        }
    }
    for w in path.windows(2) {
        if !mesh.has_edge(w[0], w[1]) {
            return Err(Error::InvalidSeam(format!(
                "consecutive seam vertices {} and {} share no edge",
                w[0], w[1]
            )));
        }
    }
    let (p, q) = (path[0], *path.last().unwrap());
    if !mesh.is_boundary_vertex(p) || !mesh.is_boundary_vertex(q) {
        return Err(Error::InvalidSeam(
            "seam endpoints must lie on the boundary".into(),
        ));
    }
    for &v in &path[1..path.len() - 1] {
        if mesh.is_boundary_vertex(v) {
            return Err(Error::InvalidSeam(format!(
                "interior seam vertex {v} lies on a boundary loop"
            )));
        }
    }
    let loops = mesh.boundary_loops();
    let l0 = loops.iter().position(|l| l.contains(p));
    let l1 = loops.iter().position(|l| l.contains(q));
    let (l0, l1) = match (l0, l1) {
        (Some(a), Some(b)) if a != b => (a, b),
        _ => {
            return Err(Error::InvalidSeam(
                "seam endpoints must lie on two distinct boundary loops".into(),
            ))
        }
    };

    // Side-B faces at each seam vertex, by walking the fan between the two
    // adjacent seam edges (or to the boundary, at the endpoints).
    let k = path.len() - 1;
    let mut relabel: HashMap<usize, Vec<usize>> = HashMap::new(); // face -> path positions
    for (i, &s) in path.iter().enumerate() {
        let faces = if i == 0 {
            walk_to_boundary(mesh, s, path[1], false)?
        } else if i == k {
            walk_to_boundary(mesh, s, path[k - 1], true)?
        } else {
            walk_between(mesh, s, path[i + 1], path[i - 1])?
        };
        for f in faces {
            relabel.entry(f).or_default().push(i);
        }
    }

    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices().to_vec();
    for &s in path.iter() {
        vertices.push(mesh.position(s));
    }
    let mut faces = mesh.faces().to_vec();
    for (&f, positions) in relabel.iter() {
        for &i in positions {
            for v in faces[f].iter_mut() {
                if *v == path[i] {
                    *v = nv + i;
                }
            }
        }
    }

    let cut = TriMesh::new(vertices, faces)
        .map_err(|e| Error::DegenerateCut(format!("cut mesh is not a valid manifold: {e}")))?;
    if cut.euler_characteristic() != 1 {
        return Err(Error::DegenerateCut(format!(
            "Euler characteristic {} after cutting (expected 1)",
            cut.euler_characteristic()
        )));
    }
    let cut_loops = cut.boundary_loops();
    if cut_loops.len() != 1 {
        return Err(Error::DegenerateCut(format!(
            "{} boundary loops after cutting (expected 1)",
            cut_loops.len()
        )));
    }

    let twins = (0..path.len()).map(|i| (path[i], nv + i)).collect();
    Ok(CutMesh {
        mesh: cut,
        original_vertex_count: nv,
        seam: seam.clone(),
        twins,
        loop0: loops[l0].clone(),
        loop1: loops[l1].clone(),
    })
}

/// Faces around interior seam vertex `s` from the face containing directed
/// edge (s, succ) to the face containing directed edge (pred, s), inclusive.
fn walk_between(mesh: &TriMesh, s: usize, succ: usize, pred: usize) -> Result<Vec<usize>> {
    let start = mesh
        .face_with_directed_edge(s, succ)
        .ok_or_else(|| Error::InvalidSeam(format!("no face with directed edge ({s}, {succ})")))?;
    let mut out = vec![start];
    let mut cur = start;
    let budget = mesh.vertex_faces(s).len();
    for _ in 0..budget {
        if mesh.prev_in_face(cur, s) == pred {
            return Ok(out);
        }
        cur = mesh.fan_next(cur, s).ok_or_else(|| {
            Error::DegenerateCut(format!(
                "fan walk at interior seam vertex {s} hit the boundary"
            ))
        })?;
        out.push(cur);
    }
    Err(Error::DegenerateCut(format!(
        "fan walk at seam vertex {s} did not close"
    )))
}

/// Faces around boundary seam endpoint `s` from the seam edge to the mesh
/// boundary. For the start endpoint (`reverse = false`) the walk begins at
/// the face containing directed edge (s, other) and proceeds by `fan_next`;
/// for the end endpoint it begins at the face containing (other, s) and
/// proceeds by `fan_prev`.
fn walk_to_boundary(mesh: &TriMesh, s: usize, other: usize, reverse: bool) -> Result<Vec<usize>> {
    let start = if reverse {
        mesh.face_with_directed_edge(other, s)
    } else {
        mesh.face_with_directed_edge(s, other)
    }
    .ok_or_else(|| {
        Error::InvalidSeam(format!("no face adjacent to seam edge ({s}, {other})"))
    })?;
    let mut out = vec![start];
    let mut cur = start;
    let budget = mesh.vertex_faces(s).len();
    for _ in 0..budget {
        let next = if reverse {
            mesh.fan_prev(cur, s)
        } else {
            mesh.fan_next(cur, s)
        };
        match next {
            Some(f) => {
                cur = f;
                out.push(f);
            }
            None => return Ok(out),
        }
    }
    Err(Error::DegenerateCut(format!(
        "fan walk at seam endpoint {s} did not terminate"
    )))
}

/// How twin values are reconciled when gluing a cut mesh back together.
#[derive(Debug, Clone, Copy)]
pub enum GlueMode {
    /// Twin values must agree within the tolerance.
    Exact,
    /// Twin values must agree modulo the period; outputs are reduced to
    /// `[0, period)`.
    Periodic(f64),
}

pub const GLUE_TOLERANCE: f64 = 1e-8;

/// Transfer per-vertex values from a cut mesh back to the original mesh,
/// checking that the two copies of each seam vertex agree.
pub fn glue(cut: &CutMesh, values: &[f64], mode: GlueMode, tol: f64) -> Result<Vec<f64>> {
    if values.len() != cut.mesh.n_vertices() {
        return Err(Error::InvalidParameter(format!(
            "glue expects {} values, got {}",
            cut.mesh.n_vertices(),
            values.len()
        )));
    }
    for &(orig, copy) in &cut.twins {
        let delta = match mode {
            GlueMode::Exact => (values[orig] - values[copy]).abs(),
            GlueMode::Periodic(p) => {
                let d = (values[orig] - values[copy]).rem_euclid(p);
                d.min(p - d)
            }
        };
        if delta > tol {
            return Err(Error::GlueMismatch {
                vertex: orig,
                delta,
            });
        }
    }
    let mut out = values[..cut.original_vertex_count].to_vec();
    if let GlueMode::Periodic(p) = mode {
        for v in out.iter_mut() {
            *v = v.rem_euclid(p);
            if *v == p {
                *v = 0.0; // rem_euclid can return the period itself
            }
        }
    }
    Ok(out)
}
