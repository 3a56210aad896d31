//! OBJ and OFF mesh file reading, OBJ writing.
//!
//! Loading fan-triangulates polygonal faces, drops vertices that no face
//! references, and validates the result through [`TriMesh::new`]. Only vertex
//! and face records are interpreted; everything else (normals, texture
//! coordinates, materials, colors) is ignored.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let (vertices, polys) = match ext.as_str() {
        "obj" => parse_obj(&text, &name)?,
        "off" => parse_off(&text, &name)?,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unsupported mesh extension {ext:?} (expected .obj or .off): {name}"
            )))
        }
    };
    build_mesh(vertices, polys, &name)
}

fn build_mesh(
    vertices: Vec<Point3<f64>>,
    polys: Vec<Vec<usize>>,
    name: &str,
) -> Result<TriMesh> {
    if polys.is_empty() {
        return Err(Error::InvalidMesh(format!("{name}: no faces")));
    }
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(polys.len());
    for poly in &polys {
        for i in 1..poly.len() - 1 {
            tris.push([poly[0], poly[i], poly[i + 1]]);
        }
    }
    // Drop unreferenced vertices, preserving the order of the rest.
    let mut used = vec![false; vertices.len()];
    for t in &tris {
        for &v in t {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::with_capacity(vertices.len());
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = kept.len();
            kept.push(vertices[i]);
        }
    }
    for t in &mut tris {
        for v in t.iter_mut() {
            *v = remap[*v];
        }
    }
    TriMesh::new(kept, tris)
}

fn parse_obj(text: &str, name: &str) -> Result<(Vec<Point3<f64>>, Vec<Vec<usize>>)> {
    let mut vertices = Vec::new();
    let mut polys = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap();
        match key {
            "v" => {
                let mut coord = [0.0f64; 3];
                for c in coord.iter_mut() {
                    let t = tok.next().ok_or_else(|| parse_err(name, ln, "short vertex"))?;
                    *c = t
                        .parse()
                        .map_err(|_| parse_err(name, ln, "bad vertex coordinate"))?;
                }
                vertices.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            "f" => {
                let mut poly = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| parse_err(name, ln, "bad face index"))?;
                    if idx < 1 {
                        return Err(parse_err(
                            name,
                            ln,
                            "face indices must be positive (1-based)",
                        ));
                    }
                    let idx = idx as usize - 1;
                    if idx >= vertices.len() {
                        return Err(parse_err(name, ln, "face index out of range"));
                    }
                    poly.push(idx);
                }
                if poly.len() < 3 {
                    return Err(parse_err(name, ln, "face with fewer than 3 vertices"));
                }
                polys.push(poly);
            }
            _ => {} // vn, vt, usemtl, o, g, s, mtllib, ...
        }
    }
    Ok((vertices, polys))
}

fn parse_off(text: &str, name: &str) -> Result<(Vec<Point3<f64>>, Vec<Vec<usize>>)> {
    // Lines stripped of comments and blanks, with original line numbers.
    let mut lines = text.lines().enumerate().filter_map(|(ln, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((ln, line))
        }
    });

    let (hln, header) = lines
        .next()
        .ok_or_else(|| parse_err(name, 0, "empty OFF file"))?;
    let mut head_tokens: Vec<&str> = Vec::new();
    if let Some(rest) = header.strip_prefix("OFF") {
        head_tokens.extend(rest.split_whitespace());
    } else {
        return Err(parse_err(name, hln, "missing OFF header"));
    }
    // Counts may share the header line or occupy the next one.
    let (cln, counts) = if head_tokens.is_empty() {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(name, hln, "missing OFF counts"))?;
        (ln, line.split_whitespace().collect::<Vec<_>>())
    } else {
        (hln, head_tokens)
    };
    if counts.len() < 2 {
        return Err(parse_err(name, cln, "OFF counts line needs nv and nf"));
    }
    let nv: usize = counts[0]
        .parse()
        .map_err(|_| parse_err(name, cln, "bad vertex count"))?;
    let nf: usize = counts[1]
        .parse()
        .map_err(|_| parse_err(name, cln, "bad face count"))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(name, cln, "unexpected end of vertex list"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 3 {
            return Err(parse_err(name, ln, "short vertex line"));
        }
        let mut coord = [0.0f64; 3];
        for (c, t) in coord.iter_mut().zip(&tok) {
            *c = t
                .parse()
                .map_err(|_| parse_err(name, ln, "bad vertex coordinate"))?;
        }
        vertices.push(Point3::new(coord[0], coord[1], coord[2]));
    }

    let mut polys = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(name, cln, "unexpected end of face list"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        let k: usize = tok[0]
            .parse()
            .map_err(|_| parse_err(name, ln, "bad face vertex count"))?;
        if k < 3 || tok.len() < k + 1 {
            return Err(parse_err(name, ln, "short face line"));
        }
        let mut poly = Vec::with_capacity(k);
        for t in &tok[1..=k] {
            let idx: usize = t.parse().map_err(|_| parse_err(name, ln, "bad face index"))?;
            if idx >= vertices.len() {
                return Err(parse_err(name, ln, "face index out of range"));
            }
            poly.push(idx);
        }
        polys.push(poly);
    }
    Ok((vertices, polys))
}

fn parse_err(path: &str, line: usize, msg: &str) -> Error {
    Error::Parse {
        path: path.to_string(),
        line: line + 1,
        msg: msg.to_string(),
    }
}

/// Write positions + faces as OBJ (1-based indices).
pub fn save_obj(
    path: impl AsRef<Path>,
    positions: &[Point3<f64>],
    faces: &[[usize; 3]],
) -> Result<()> {
    let mut out = String::with_capacity(positions.len() * 40 + faces.len() * 20);
    for p in positions {
        out.push_str("v ");
        out.push_str(&fmt_sig9(p.x));
        out.push(' ');
        out.push_str(&fmt_sig9(p.y));
        out.push(' ');
        out.push_str(&fmt_sig9(p.z));
        out.push('\n');
    }
    for f in faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn save_mesh_obj(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    save_obj(path, mesh.vertices(), mesh.faces())
}

/// Format with 9 significant digits. Values in a moderate range are written
/// positionally (via the exact `{:.8e}` digits, so there is no log10 edge
/// case at binade boundaries); extreme magnitudes keep scientific notation.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // Never expected in mesh output; make it visible rather than panic.
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x); // e.g. "-1.23456789e-3"
    let (mant, exp) = sci.split_once('e').expect("exponent in {:.8e}");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if !(-5..9).contains(&exp) {
        return trim_zeros_sci(mant, exp);
    }
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect(); // 9 digits
    let mut s = String::new();
    if neg {
        s.push('-');
    }
    let point = exp + 1; // digits before the decimal point
    if point <= 0 {
        s.push_str("0.");
        for _ in 0..-point {
            s.push('0');
        }
        s.push_str(&digits);
    } else {
        let point = point as usize;
        s.push_str(&digits[..point]);
        s.push('.');
        s.push_str(&digits[point..]);
    }
    // Drop trailing zeros (and a bare trailing point).
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

fn trim_zeros_sci(mant: &str, exp: i32) -> String {
    let m = mant.trim_end_matches('0').trim_end_matches('.');
    format!("{m}e{exp}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(123.456), "123.456");
        assert_eq!(fmt_sig9(0.0001), "0.0001");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(12345678912.0), "1.23456789e10");
        assert_eq!(fmt_sig9(1e-7), "1e-7");
        // 9 significant digits of pi.
        assert_eq!(fmt_sig9(std::f64::consts::PI), "3.14159265");
    }

    #[test]
    fn sig9_round_trips_within_tolerance() {
        let xs = [
            1.234567891234,
            -0.000123456789,
            987654.321,
            2.718281828459045,
            1e-12,
            -4.2e13,
        ];
        for &x in &xs {
            let y: f64 = fmt_sig9(x).parse().unwrap();
            assert!(
                (x - y).abs() <= 1e-8 * x.abs(),
                "{x} -> {} -> {y}",
                fmt_sig9(x)
            );
        }
    }

    #[test]
    fn obj_round_trip() {
        let dir = std::env::temp_dir().join("tubemap_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.obj");
        let mesh = crate::testutil::cylinder_grid(8, 4, 1.0, 2.0);
        save_mesh_obj(&path, &mesh).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        assert_eq!(back.faces(), mesh.faces());
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            assert!((a - b).norm() <= 1e-8 * (1.0 + a.coords.norm()));
        }
    }

    #[test]
    fn obj_quads_and_isolated_vertices() {
        let text = "
# quad plus a vertex nothing references
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 9 9 9
f 1 2 3 4
";
        let dir = std::env::temp_dir().join("tubemap_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("quad.obj");
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.n_vertices(), 4); // isolated vertex dropped
        assert_eq!(mesh.n_faces(), 2); // fan-triangulated quad
    }

    #[test]
    fn obj_face_index_forms() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 3\n";
        let dir = std::env::temp_dir().join("tubemap_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("forms.obj");
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh(&path).unwrap();
        assert_eq!(mesh.n_faces(), 1);
    }

    #[test]
    fn off_parse_both_header_styles() {
        let with_counts_inline = "OFF 4 2 0
0 0 0
1 0 0
1 1 0
0 1 0
3 0 1 2
3 0 2 3
";
        let with_counts_next = "OFF
4 2 0
0 0 0
1 0 0
1 1 0
0 1 0
3 0 1 2
3 0 2 3
";
        let dir = std::env::temp_dir().join("tubemap_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        for (i, text) in [with_counts_inline, with_counts_next].iter().enumerate() {
            let path = dir.join(format!("style{i}.off"));
            std::fs::write(&path, text).unwrap();
            let mesh = load_mesh(&path).unwrap();
            assert_eq!(mesh.n_vertices(), 4);
            assert_eq!(mesh.n_faces(), 2);
        }
    }

    #[test]
    fn rejects_unknown_extension_and_bad_faces() {
        let dir = std::env::temp_dir().join("tubemap_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mesh.stl");
        std::fs::write(&path, "whatever").unwrap();
        assert!(load_mesh(&path).is_err());

        let path = dir.join("zero.obj");
        std::fs::write(&path, "f 1 2 3\n").unwrap();
        assert!(load_mesh(&path).is_err()); // index out of range
    }
}
