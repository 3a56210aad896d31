//! Beltrami coefficients of piecewise-linear maps and the linear
//! Beltrami solver that reconstructs a map from a prescribed coefficient.

use nalgebra::{Point2, Point3, Vector2};
use num_complex::Complex64;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::solve::{solve_constrained, LinearConstraintSet};

/// Isometrically flatten a 3-D triangle into the plane with positive
/// orientation: the first edge lies along +x and the triangle's normal maps
/// to +z.
pub fn flatten_face(p0: Point3<f64>, p1: Point3<f64>, p2: Point3<f64>) -> Result<[Point2<f64>; 3]> {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let n = e1.cross(&e2);
    let len = e1.norm();
    if len == 0.0 || n.norm() == 0.0 {
        return Err(Error::DegenerateFace {
            face: usize::MAX,
            area: 0.5 * n.norm(),
        });
    }
    let x_hat = e1 / len;
    let y_hat = n.normalize().cross(&x_hat);
    Ok([
        Point2::origin(),
        Point2::new(len, 0.0),
        Point2::new(e2.dot(&x_hat), e2.dot(&y_hat)),
    ])
}

/// Gather per-face corner triples from planar vertex coordinates.
pub fn face_corners_2d(faces: &[[usize; 3]], coords: &[Point2<f64>]) -> Vec<[Point2<f64>; 3]> {
    faces
        .iter()
        .map(|f| [coords[f[0]], coords[f[1]], coords[f[2]]])
        .collect()
}

/// One Beltrami coefficient per face. Faces whose source or image triangle
/// is degenerate carry an infinite sentinel value.
#[derive(Debug, Clone)]
pub struct BeltramiField {
    pub values: Vec<Complex64>,
}

impl BeltramiField {
    /// True when every coefficient has modulus strictly below 1.
    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|m| m.norm() < 1.0)
    }

    /// Largest coefficient modulus (infinite if any face is degenerate).
    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Signed area and hat-function gradients of a planar triangle.
/// Gradient of the hat function of corner `i` is `rot(p_{i+2} - p_{i+1}) / (2 A)`
/// with `rot(v) = (-v_y, v_x)`.
fn hat_gradients(c: &[Point2<f64>; 3]) -> (f64, [Vector2<f64>; 3]) {
    let signed_area = 0.5
        * ((c[1].x - c[0].x) * (c[2].y - c[0].y) - (c[2].x - c[0].x) * (c[1].y - c[0].y));
    let rot = |a: Point2<f64>, b: Point2<f64>| Vector2::new(-(b.y - a.y), b.x - a.x);
    let g = [
        rot(c[1], c[2]) / (2.0 * signed_area),
        rot(c[2], c[0]) / (2.0 * signed_area),
        rot(c[0], c[1]) / (2.0 * signed_area),
    ];
    (signed_area, g)
}

/// Beltrami coefficient of the piecewise-linear map taking each source
/// triangle to the corresponding image triangle.
pub fn beltrami_coefficient(
    source: &[[Point2<f64>; 3]],
    image: &[[Point2<f64>; 3]],
) -> BeltramiField {
    assert_eq!(source.len(), image.len(), "face count mismatch");
    let mut values = Vec::with_capacity(source.len());
    for (s, t) in source.iter().zip(image) {
        let (area, g) = hat_gradients(s);
        if area == 0.0 || !area.is_finite() {
            values.push(Complex64::new(f64::INFINITY, 0.0));
            continue;
        }
        let mut ux = 0.0;
        let mut uy = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..3 {
            ux += t[i].x * g[i].x;
            uy += t[i].x * g[i].y;
            vx += t[i].y * g[i].x;
            vy += t[i].y * g[i].y;
        }
        let fz = Complex64::new(ux + vy, vx - uy) * 0.5;
        let fzbar = Complex64::new(ux - vy, vx + uy) * 0.5;
        if fz.norm() == 0.0 {
            values.push(Complex64::new(f64::INFINITY, 0.0));
        } else {
            values.push(fzbar / fz);
        }
    }
    BeltramiField { values }
}

/// Coefficient moduli at or above this are clamped (or rejected in strict
/// mode) before the solve, keeping the face matrices positive definite.
pub const MU_CLAMP_LIMIT: f64 = 1.0 - 1e-8;

/// Result of a linear Beltrami solve.
#[derive(Debug, Clone)]
pub struct LbsOutcome {
    pub coords: Vec<Point2<f64>>,
    /// Faces whose coefficient was clamped to the admissible disk.
    pub clamped_faces: usize,
}

/// Per-face anisotropy matrix entries for a Beltrami coefficient:
/// `[[a1, a2], [a2, a3]]` with determinant exactly one.
fn alpha(mu: Complex64) -> (f64, f64, f64) {
    let m2 = mu.norm_sqr();
    let denom = 1.0 - m2;
    let a1 = ((mu.re - 1.0).powi(2) + mu.im * mu.im) / denom;
    let a2 = -2.0 * mu.im / denom;
    let a3 = ((mu.re + 1.0).powi(2) + mu.im * mu.im) / denom;
    (a1, a2, a3)
}

/// Reconstruct a planar map with prescribed Beltrami coefficient by solving
/// the associated elliptic system for each coordinate under the given
/// constraints.
///
/// The map is the minimizer of a per-face anisotropic Dirichlet energy; a
/// piecewise-linear map whose own coefficient equals `mu` satisfies the
/// interior equations exactly, so prescribing the coefficient of a known map
/// together with its boundary values reproduces that map.
#[allow(clippy::too_many_arguments)]
pub fn lbs_solve(
    n_vertices: usize,
    faces: &[[usize; 3]],
    source: &[[Point2<f64>; 3]],
    mu: &BeltramiField,
    cx: &LinearConstraintSet,
    cy: &LinearConstraintSet,
    strict: bool,
) -> Result<LbsOutcome> {
    assert_eq!(faces.len(), source.len(), "face count mismatch");
    assert_eq!(faces.len(), mu.len(), "coefficient count mismatch");

    let mut clamped = 0usize;
    let mut triplets = TriMat::new((n_vertices, n_vertices));
    for (idx, ((f, s), &m)) in faces.iter().zip(source).zip(&mu.values).enumerate() {
        let mut m = m;
        if !m.re.is_finite() || !m.im.is_finite() {
            if strict {
                return Err(Error::NonAdmissibleMu {
                    face: idx,
                    modulus: f64::INFINITY,
                });
            }
            m = Complex64::new(0.0, 0.0);
            clamped += 1;
        } else if m.norm() >= MU_CLAMP_LIMIT {
            if strict {
                return Err(Error::NonAdmissibleMu {
                    face: idx,
                    modulus: m.norm(),
                });
            }
            m *= MU_CLAMP_LIMIT / m.norm();
            clamped += 1;
        }
        let (area, g) = hat_gradients(s);
        let area = area.abs();
        if area == 0.0 {
            continue; // degenerate source triangle contributes nothing
        }
        let (a1, a2, a3) = alpha(m);
        for a in 0..3 {
            for b in 0..3 {
                let ga = g[a];
                let gb = g[b];
                let k = area
                    * (ga.x * (a1 * gb.x + a2 * gb.y) + ga.y * (a2 * gb.x + a3 * gb.y));
                triplets.add_triplet(f[a], f[b], k);
            }
        }
    }
    let stiffness: CsMat<f64> = triplets.to_csr();
    let zeros = vec![0.0; n_vertices];
    let xs = solve_constrained(stiffness.view(), &zeros, cx)?;
    let ys = solve_constrained(stiffness.view(), &zeros, cy)?;
    let coords = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| Point2::new(x, y))
        .collect();
    Ok(LbsOutcome {
        coords,
        clamped_faces: clamped,
    })
}

/// Beltrami coefficient of the composition `g ∘ f` on a face where `f` has
/// coefficient `mu_f` and derivative `fz_f`, and `g` (evaluated on the image
/// of `f`) has coefficient `mu_g`.
pub fn compose_beltrami(
    mu_f: Complex64,
    fz_f: Complex64,
    mu_g: Complex64,
) -> Result<Complex64> {
    let ratio = fz_f.conj() / fz_f;
    let denom = Complex64::new(1.0, 0.0) + ratio * mu_f.conj() * mu_g;
    if denom.norm() < 1e-14 {
        return Err(Error::Solver(
            "coefficient composition is singular".into(),
        ));
    }
    Ok((mu_f + ratio * mu_g) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::cotan_operator;
    use crate::mesh::TriMesh;
    use crate::testutil::planar_grid;
    use nalgebra::Point2;

    fn grid_corners(mesh: &TriMesh) -> Vec<[Point2<f64>; 3]> {
        let coords: Vec<Point2<f64>> = mesh
            .vertices()
            .iter()
            .map(|p| Point2::new(p.x, p.y))
            .collect();
        face_corners_2d(mesh.faces(), &coords)
    }

    fn apply<F: Fn(Point2<f64>) -> Point2<f64>>(
        corners: &[[Point2<f64>; 3]],
        f: F,
    ) -> Vec<[Point2<f64>; 3]> {
        corners
            .iter()
            .map(|c| [f(c[0]), f(c[1]), f(c[2])])
            .collect()
    }

    #[test]
    fn horizontal_stretch_has_real_coefficient_one_third() {
        // (x, y) -> (2x, y): f_z = 3/2, f_zbar = 1/2, so mu = 1/3.
        let (mesh, _) = planar_grid(3, 3, 1.0);
        let src = grid_corners(&mesh);
        let img = apply(&src, |p| Point2::new(2.0 * p.x, p.y));
        let mu = beltrami_coefficient(&src, &img);
        for m in &mu.values {
            assert!((m - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-14);
        }
        assert!(mu.is_admissible());
        assert!((mu.max_modulus() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn affine_map_has_the_predicted_constant_coefficient() {
        // T(x, y) = (2x + y/2, -x/5 + y): u_x = 2, u_y = 1/2, v_x = -1/5, v_y = 1.
        let (mesh, _) = planar_grid(4, 3, 0.7);
        let src = grid_corners(&mesh);
        let img = apply(&src, |p| {
            Point2::new(2.0 * p.x + 0.5 * p.y, -0.2 * p.x + p.y)
        });
        let mu = beltrami_coefficient(&src, &img);
        let fz = Complex64::new(2.0 + 1.0, -0.2 - 0.5) * 0.5;
        let fzbar = Complex64::new(2.0 - 1.0, -0.2 + 0.5) * 0.5;
        let want = fzbar / fz;
        for m in &mu.values {
            assert!((m - want).norm() < 1e-12);
        }
    }

    #[test]
    fn similarity_maps_have_zero_coefficient_and_flips_exceed_one() {
        let (mesh, _) = planar_grid(3, 4, 1.0);
        let src = grid_corners(&mesh);
        // Rotation + scaling is conformal.
        let (s, c) = 0.6f64.sin_cos();
        let img = apply(&src, |p| {
            Point2::new(1.7 * (c * p.x - s * p.y), 1.7 * (s * p.x + c * p.y))
        });
        let mu = beltrami_coefficient(&src, &img);
        assert!(mu.max_modulus() < 1e-14);
        // An orientation-reversing map with nonzero f_z has modulus above 1.
        let img = apply(&src, |p| Point2::new(p.y, 0.5 * p.x));
        let mu = beltrami_coefficient(&src, &img);
        assert!(!mu.is_admissible());
        for m in &mu.values {
            assert!(m.norm() > 1.0);
        }
    }

    #[test]
    fn anisotropy_matrix_has_unit_determinant_inside_the_disk() {
        // Deterministic sweep over the open disk.
        for i in 0..40 {
            for j in 0..40 {
                let r = 0.999 * (i as f64 + 0.5) / 40.0;
                let t = std::f64::consts::TAU * (j as f64 + 0.5) / 40.0;
                let m = Complex64::from_polar(r, t);
                let (a1, a2, a3) = alpha(m);
                assert!((a1 * a3 - a2 * a2 - 1.0).abs() < 1e-9, "det at {m}");
                assert!(a1 > 0.0 && a3 > 0.0);
            }
        }
    }

    #[test]
    fn zero_coefficient_solve_matches_the_harmonic_solve() {
        let (mesh, _) = planar_grid(6, 6, 1.0);
        let src = grid_corners(&mesh);
        let mu = BeltramiField {
            values: vec![Complex64::new(0.0, 0.0); mesh.n_faces()],
        };
        let mut cx = LinearConstraintSet::new();
        let mut cy = LinearConstraintSet::new();
        for v in 0..mesh.n_vertices() {
            if mesh.is_boundary_vertex(v) {
                let p = mesh.position(v);
                // A mildly warped boundary so the interior is nontrivial.
                cx.pin(v, p.x + 0.3 * p.y * p.y);
                cy.pin(v, p.y - 0.2 * p.x * p.x);
            }
        }
        let out = lbs_solve(
            mesh.n_vertices(),
            mesh.faces(),
            &src,
            &mu,
            &cx,
            &cy,
            true,
        )
        .unwrap();
        assert_eq!(out.clamped_faces, 0);

        let op = cotan_operator(&mesh).unwrap();
        let zeros = vec![0.0; mesh.n_vertices()];
        let hx = solve_constrained(op.stiffness().view(), &zeros, &cx).unwrap();
        let hy = solve_constrained(op.stiffness().view(), &zeros, &cy).unwrap();
        for v in 0..mesh.n_vertices() {
            assert!((out.coords[v].x - hx[v]).abs() < 1e-9);
            assert!((out.coords[v].y - hy[v]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_coefficient_reproduces_the_affine_map() {
        let (mesh, _) = planar_grid(5, 5, 1.0);
        let src = grid_corners(&mesh);
        let t = |p: Point2<f64>| Point2::new(2.0 * p.x + 0.5 * p.y, 0.1 * p.x + 1.3 * p.y);
        let img = apply(&src, t);
        let mu = beltrami_coefficient(&src, &img);
        let mut cx = LinearConstraintSet::new();
        let mut cy = LinearConstraintSet::new();
        for v in 0..mesh.n_vertices() {
            if mesh.is_boundary_vertex(v) {
                let p = mesh.position(v);
                let q = t(Point2::new(p.x, p.y));
                cx.pin(v, q.x);
                cy.pin(v, q.y);
            }
        }
        let out = lbs_solve(mesh.n_vertices(), mesh.faces(), &src, &mu, &cx, &cy, true)
            .unwrap();
        for v in 0..mesh.n_vertices() {
            let p = mesh.position(v);
            let q = t(Point2::new(p.x, p.y));
            assert!((out.coords[v].x - q.x).abs() < 1e-9, "vertex {v}");
            assert!((out.coords[v].y - q.y).abs() < 1e-9, "vertex {v}");
        }
    }

    #[test]
    fn measured_coefficient_recovers_a_nonlinear_vertex_map() {
        // A smooth orientation-preserving warp sampled at the vertices gives
        // a piecewise-linear map; prescribing its own per-face coefficient
        // with its boundary values must reproduce it at interior vertices.
        let (mesh, _) = planar_grid(7, 6, 0.5);
        let src = grid_corners(&mesh);
        let warp = |p: Point2<f64>| {
            Point2::new(
                p.x + 0.1 * (p.y * 1.3).sin() + 0.05 * p.x * p.y,
                p.y + 0.08 * (p.x * 1.7).cos(),
            )
        };
        let img = apply(&src, warp);
        let mu = beltrami_coefficient(&src, &img);
        assert!(mu.is_admissible(), "max modulus {}", mu.max_modulus());

        let mut cx = LinearConstraintSet::new();
        let mut cy = LinearConstraintSet::new();
        for v in 0..mesh.n_vertices() {
            if mesh.is_boundary_vertex(v) {
                let p = mesh.position(v);
                let q = warp(Point2::new(p.x, p.y));
                cx.pin(v, q.x);
                cy.pin(v, q.y);
            }
        }
        let out = lbs_solve(mesh.n_vertices(), mesh.faces(), &src, &mu, &cx, &cy, true)
            .unwrap();
        for v in 0..mesh.n_vertices() {
            let p = mesh.position(v);
            let q = warp(Point2::new(p.x, p.y));
            assert!(
                (out.coords[v].x - q.x).abs() < 1e-8 && (out.coords[v].y - q.y).abs() < 1e-8,
                "vertex {v}: got {:?}, want {q:?}",
                out.coords[v]
            );
        }
    }

    #[test]
    fn composition_rules_hold_in_special_cases() {
        let fz = Complex64::new(0.8, 0.3);
        // Composing with a conformal second map keeps the coefficient.
        let mu_f = Complex64::new(0.2, -0.1);
        let got = compose_beltrami(mu_f, fz, Complex64::new(0.0, 0.0)).unwrap();
        assert!((got - mu_f).norm() < 1e-15);
        // Conformal first map: coefficient transforms by the derivative ratio.
        let mu_g = Complex64::new(0.15, 0.25);
        let got = compose_beltrami(Complex64::new(0.0, 0.0), fz, mu_g).unwrap();
        assert!((got - fz.conj() / fz * mu_g).norm() < 1e-15);
        // Inverse coefficient cancels the map: mu_g = -mu_f fz / conj(fz)
        // composes to zero.
        let mu_g = -mu_f * fz / fz.conj();
        let got = compose_beltrami(mu_f, fz, mu_g).unwrap();
        assert!(got.norm() < 1e-15);
    }

    #[test]
    fn flatten_preserves_lengths_and_orientation() {
        use nalgebra::Point3;
        let p0 = Point3::new(0.3, -0.2, 1.1);
        let p1 = Point3::new(1.4, 0.6, 0.9);
        let p2 = Point3::new(0.1, 1.0, 1.8);
        let f = flatten_face(p0, p1, p2).unwrap();
        assert!((f[0].coords.norm()) < 1e-15);
        assert!(((f[1] - f[0]).norm() - (p1 - p0).norm()).abs() < 1e-12);
        assert!(((f[2] - f[0]).norm() - (p2 - p0).norm()).abs() < 1e-12);
        assert!(((f[2] - f[1]).norm() - (p2 - p1).norm()).abs() < 1e-12);
        let (area2d, _) = hat_gradients(&f);
        let area3d = 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();
        assert!(area2d > 0.0);
        assert!((area2d - area3d).abs() < 1e-12);
        // Collapsed triangles are rejected.
        assert!(flatten_face(p0, p0, p2).is_err());
    }
}
