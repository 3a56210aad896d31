//! Free-boundary parameterization: pad the tube with extrapolated boundary
//! rings so the fixed rectangle boundary lands on the padding, then restrict
//! the result to the original vertices.

use std::time::Instant;

use nalgebra::{DMatrix, Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLoop, TriMesh};
use crate::metrics::angular_distortion;
use crate::tube::{
    initial_parameterization, seam_correction, FixedParams, FixedReport, StageTimings, TubeCoords,
};

/// Controls for the boundary extension.
#[derive(Debug, Clone)]
pub struct ExtensionConfig {
    /// Number of padded rings added beyond each boundary loop.
    pub layers: usize,
    /// Blend between the outward continuation direction (0) and the surface
    /// normal (1) for the extrapolated ring.
    pub tau: f64,
    /// Strength of the cycle-Laplacian smoothing applied to each raw ring.
    pub omega: f64,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            layers: 1,
            tau: 0.2,
            omega: 0.5,
        }
    }
}

fn validate(cfg: &ExtensionConfig) -> Result<()> {
    if cfg.layers == 0 {
        return Err(Error::InvalidParameter(
            "extension needs at least one layer".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(Error::InvalidParameter(format!(
            "normal blend {} outside [0, 1]",
            cfg.tau
        )));
    }
    if !(cfg.omega >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing strength {} is negative",
            cfg.omega
        )));
    }
    Ok(())
}

/// One extrapolated position per ring vertex, stepping along a blend of the
/// outward bi-normal and the vertex normal by the ring's mean interior edge
/// length.
pub fn raw_extend_ring(
    mesh: &TriMesh,
    ring: &BoundaryLoop,
    tau: f64,
) -> Result<Vec<Point3<f64>>> {
    let m = ring.len();
    let on_ring: std::collections::HashSet<usize> = ring.vertices.iter().copied().collect();

    let mut dirs: Vec<Vector3<f64>> = Vec::with_capacity(m);
    let mut steps: Vec<f64> = Vec::with_capacity(m);
    for (i, &v) in ring.vertices.iter().enumerate() {
        let p = mesh.position(v);
        let prev = mesh.position(ring.vertices[(i + m - 1) % m]);
        let next = mesh.position(ring.vertices[(i + 1) % m]);
        let t = next - prev;
        if t.norm() == 0.0 {
            return Err(Error::InvalidMesh(format!(
                "zero tangent at boundary vertex {v}"
            )));
        }
        let t = t.normalize();

        let mut inward = Vector3::zeros();
        let mut step = 0.0;
        let mut count = 0usize;
        for &q in mesh.neighbors(v) {
            if on_ring.contains(&q) {
                continue;
            }
            let e = mesh.position(q) - p;
            inward += e;
            step += e.norm();
            count += 1;
        }
        if count == 0 || inward.norm() == 0.0 {
            return Err(Error::InvalidMesh(format!(
                "boundary vertex {v} has no interior neighbor"
            )));
        }
        let inward = inward.normalize();
        steps.push(step / count as f64);

        let n = mesh.vertex_normal(v)?;
        let b = t.cross(&n);
        if b.norm() < 1e-12 {
            return Err(Error::InvalidMesh(format!(
                "tangent and normal are parallel at boundary vertex {v}"
            )));
        }
        let mut b = b.normalize();
        if b.dot(&inward) > 0.0 {
            b = -b;
        }
        dirs.push(((1.0 - tau) * b + tau * n).normalize());
    }

    let mean_step = steps.iter().sum::<f64>() / m as f64;
    Ok(ring
        .vertices
        .iter()
        .zip(&dirs)
        .map(|(&v, d)| mesh.position(v) + mean_step * d)
        .collect())
}

/// Solve `(I + omega * L) x = raw` per coordinate, where `L` is the cycle
/// graph Laplacian over the ring.
pub fn smooth_ring(raw: &[Point3<f64>], omega: f64) -> Vec<Point3<f64>> {
    let m = raw.len();
    if m < 3 || omega == 0.0 {
        return raw.to_vec();
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = 1.0 + 2.0 * omega;
        a[(i, (i + 1) % m)] -= omega;
        a[(i, (i + m - 1) % m)] -= omega;
    }
    let mut rhs = DMatrix::<f64>::zeros(m, 3);
    for (i, p) in raw.iter().enumerate() {
        rhs[(i, 0)] = p.x;
        rhs[(i, 1)] = p.y;
        rhs[(i, 2)] = p.z;
    }
    let chol = a.cholesky().expect("ring smoothing system is positive definite");
    let x = chol.solve(&rhs);
    (0..m)
        .map(|i| Point3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)]))
        .collect()
}

/// A tube padded with extrapolated rings. The first `original_vertices`
/// vertices of `mesh` are the input vertices, in their original order.
pub struct ExtendedMesh {
    pub mesh: TriMesh,
    pub original_vertices: usize,
    pub raw_seconds: f64,
    pub smooth_seconds: f64,
}

/// Add `cfg.layers` extrapolated rings beyond both boundary loops.
pub fn extend_mesh(mesh: &TriMesh, cfg: &ExtensionConfig) -> Result<ExtendedMesh> {
    validate(cfg)?;
    let original_vertices = mesh.n_vertices();
    let mut current = mesh.clone();
    let mut raw_seconds = 0.0;
    let mut smooth_seconds = 0.0;

    for _ in 0..cfg.layers {
        let loops = current.boundary_loops();
        if loops.len() != 2 {
            return Err(Error::BoundaryLoopCount {
                expected: 2,
                found: loops.len(),
            });
        }
        let mut verts = current.vertices().to_vec();
        let mut faces = current.faces().to_vec();
        for lp in &loops {
            let t0 = Instant::now();
            let raw = raw_extend_ring(&current, lp, cfg.tau)?;
            raw_seconds += t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let smoothed = smooth_ring(&raw, cfg.omega);
            smooth_seconds += t1.elapsed().as_secs_f64();

            let base = verts.len();
            verts.extend_from_slice(&smoothed);
            let m = lp.len();
            for i in 0..m {
                let r0 = lp.vertices[i];
                let r1 = lp.vertices[(i + 1) % m];
                let n0 = base + i;
                let n1 = base + (i + 1) % m;
                faces.push([r1, r0, n0]);
                faces.push([r1, n0, n1]);
            }
        }
        current = TriMesh::new(verts, faces)?;
    }

    Ok(ExtendedMesh {
        mesh: current,
        original_vertices,
        raw_seconds,
        smooth_seconds,
    })
}

/// Free-boundary pipeline: extend, run the fixed pipeline on the padded
/// tube, and keep only the original vertices' coordinates. Distortion is
/// reported against the original mesh.
pub fn parameterize_free(
    mesh: &TriMesh,
    cfg: &ExtensionConfig,
    params: &FixedParams,
) -> Result<(TubeCoords, FixedReport)> {
    let ext = extend_mesh(mesh, cfg)?;

    let t0 = Instant::now();
    let init = initial_parameterization(&ext.mesh, params.strict_mu)?;
    let initial_param = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let corr = seam_correction(&ext.mesh, &init.coords, params.d, params.strict_mu)?;
    let correction = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let restrict = |c: &TubeCoords| TubeCoords {
        u: c.u[..ext.original_vertices].to_vec(),
        z: c.z[..ext.original_vertices].to_vec(),
        length: c.length,
    };
    let coords_init = restrict(&init.coords);
    let coords = restrict(&corr.coords);
    let restriction = t2.elapsed().as_secs_f64();

    let rep_init = angular_distortion(mesh, &coords_init.positions());
    let rep_corr = angular_distortion(mesh, &coords.positions());

    let report = FixedReport {
        l_star: init.l_star,
        seam_length: init.seam_length,
        distortion_init: (&rep_init).into(),
        distortion_corrected: (&rep_corr).into(),
        flipped_faces: init.rect_flips,
        clamped_faces_initial: init.clamped_faces,
        clamped_faces_correction: corr.clamped_faces,
        corrected_vertices: corr.corrected_vertices,
        length_at_bracket_edge: init.length_at_bracket_edge,
        timings: StageTimings {
            extension: ext.raw_seconds,
            smoothing: ext.smooth_seconds,
            initial_param,
            correction,
            restriction,
        },
    };
    Ok((coords, report))
}
