//! Angular-distortion measurement and batch report output.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::TriMesh;
use crate::qc::BeltramiField;

/// Per-corner angle differences between a mesh and an image of its vertices,
/// in degrees.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub max_deg: f64,
    /// Faces skipped because the source or image triangle has a zero-length
    /// edge.
    pub degenerate_faces: usize,
    /// Image faces with negative signed area (planar images only; zero when
    /// the image is three-dimensional).
    pub flipped_faces: usize,
    #[serde(skip)]
    pub per_corner_deg: Vec<f64>,
}

fn corner_angle_3d(a: Point3<f64>, b: Point3<f64>, c: Point3<f64>) -> f64 {
    let u = b - a;
    let v = c - a;
    u.cross(&v).norm().atan2(u.dot(&v))
}

fn corner_angle_2d(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    let u = b - a;
    let v = c - a;
    let cross = u.x * v.y - u.y * v.x;
    cross.abs().atan2(u.dot(&v))
}

fn summarize(mut per_corner: Vec<f64>, degenerate: usize, flipped: usize) -> DistortionReport {
    let n = per_corner.len();
    let mean = if n == 0 {
        0.0
    } else {
        per_corner.iter().sum::<f64>() / n as f64
    };
    let max = per_corner.iter().cloned().fold(0.0, f64::max);
    per_corner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        per_corner[n / 2]
    } else {
        0.5 * (per_corner[n / 2 - 1] + per_corner[n / 2])
    };
    DistortionReport {
        mean_deg: mean,
        median_deg: median,
        max_deg: max,
        degenerate_faces: degenerate,
        flipped_faces: flipped,
        per_corner_deg: per_corner,
    }
}

fn face_is_degenerate_3d(c: &[Point3<f64>; 3]) -> bool {
    (c[1] - c[0]).norm() == 0.0 || (c[2] - c[1]).norm() == 0.0 || (c[0] - c[2]).norm() == 0.0
}

fn face_is_degenerate_2d(c: &[Point2<f64>; 3]) -> bool {
    (c[1] - c[0]).norm() == 0.0 || (c[2] - c[1]).norm() == 0.0 || (c[0] - c[2]).norm() == 0.0
}

/// Angle differences between `mesh` and a 3-D image of its vertices.
pub fn angular_distortion(mesh: &TriMesh, image: &[Point3<f64>]) -> DistortionReport {
    assert_eq!(image.len(), mesh.n_vertices(), "image size mismatch");
    let mut per_corner = Vec::with_capacity(3 * mesh.n_faces());
    let mut degenerate = 0usize;
    for f in mesh.faces() {
        let s = [
            mesh.position(f[0]),
            mesh.position(f[1]),
            mesh.position(f[2]),
        ];
        let t = [image[f[0]], image[f[1]], image[f[2]]];
        if face_is_degenerate_3d(&s) || face_is_degenerate_3d(&t) {
            degenerate += 1;
            continue;
        }
        for k in 0..3 {
            let sa = corner_angle_3d(s[k], s[(k + 1) % 3], s[(k + 2) % 3]);
            let ta = corner_angle_3d(t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            per_corner.push((sa - ta).abs().to_degrees());
        }
    }
    summarize(per_corner, degenerate, 0)
}

/// Angle differences between `mesh` and a planar image of its vertices,
/// also counting orientation-reversed image faces.
pub fn angular_distortion_planar(mesh: &TriMesh, image: &[Point2<f64>]) -> DistortionReport {
    assert_eq!(image.len(), mesh.n_vertices(), "image size mismatch");
    let mut per_corner = Vec::with_capacity(3 * mesh.n_faces());
    let mut degenerate = 0usize;
    let mut flipped = 0usize;
    for f in mesh.faces() {
        let s = [
            mesh.position(f[0]),
            mesh.position(f[1]),
            mesh.position(f[2]),
        ];
        let t = [image[f[0]], image[f[1]], image[f[2]]];
        let signed = 0.5
            * ((t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[2].x - t[0].x) * (t[1].y - t[0].y));
        if signed < 0.0 {
            flipped += 1;
        }
        if face_is_degenerate_3d(&s) || face_is_degenerate_2d(&t) {
            degenerate += 1;
            continue;
        }
        for k in 0..3 {
            let sa = corner_angle_3d(s[k], s[(k + 1) % 3], s[(k + 2) % 3]);
            let ta = corner_angle_2d(t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            per_corner.push((sa - ta).abs().to_degrees());
        }
    }
    summarize(per_corner, degenerate, flipped)
}

/// Mean angle difference per face, in face order, for writing distortion
/// fields alongside a parameterized mesh. Faces with a zero-length source or
/// image edge yield NaN.
pub fn per_face_distortion_deg(mesh: &TriMesh, image: &[Point3<f64>]) -> Vec<f64> {
    assert_eq!(image.len(), mesh.n_vertices(), "image size mismatch");
    mesh.faces()
        .iter()
        .map(|f| {
            let s = [
                mesh.position(f[0]),
                mesh.position(f[1]),
                mesh.position(f[2]),
            ];
            let t = [image[f[0]], image[f[1]], image[f[2]]];
            if face_is_degenerate_3d(&s) || face_is_degenerate_3d(&t) {
                return f64::NAN;
            }
            let mut acc = 0.0;
            for k in 0..3 {
                let sa = corner_angle_3d(s[k], s[(k + 1) % 3], s[(k + 2) % 3]);
                let ta = corner_angle_3d(t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                acc += (sa - ta).abs().to_degrees();
            }
            acc / 3.0
        })
        .collect()
}

/// Area-weighted summary of a Beltrami field.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MuSummary {
    /// Area-weighted mean of the squared modulus (non-finite values skipped).
    pub mean_sq: f64,
    /// Largest modulus over all faces.
    pub max_abs: f64,
}

pub fn beltrami_summary(mu: &BeltramiField, areas: &[f64]) -> MuSummary {
    assert_eq!(mu.len(), areas.len(), "area count mismatch");
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_abs: f64 = 0.0;
    for (m, &a) in mu.values.iter().zip(areas) {
        let n = m.norm();
        max_abs = max_abs.max(n);
        if n.is_finite() {
            num += a * n * n;
            den += a;
        }
    }
    MuSummary {
        mean_sq: if den > 0.0 { num / den } else { 0.0 },
        max_abs,
    }
}

/// One row of a batch report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub mesh_id: String,
    pub n_vertices: usize,
    pub n_faces: usize,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub max_deg: f64,
    pub flipped_faces: usize,
    pub mu_mean_sq: f64,
    pub mu_max: f64,
    pub stage_label: String,
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        "mesh_id,n_vertices,n_faces,mean_deg,median_deg,max_deg,flipped_faces,mu_mean_sq,mu_max,stage_label"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_escape(&r.mesh_id),
            r.n_vertices,
            r.n_faces,
            r.mean_deg,
            r.median_deg,
            r.max_deg,
            r.flipped_faces,
            r.mu_mean_sq,
            r.mu_max,
            csv_escape(&r.stage_label)
        )?;
    }
    Ok(())
}

pub fn write_report_json(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let out = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(out, rows)
        .map_err(|e| crate::error::Error::InvalidParameter(format!("report encoding: {e}")))?;
    Ok(())
}
