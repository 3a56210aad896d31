//! End-to-end tests of the `tubemap` binary: synth -> param -> bend on a
//! small corpus, plus the error-handling contract (exit codes 1 and 2).

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tubemap")
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

struct Run {
    status: Option<i32>,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("spawn tubemap");
    Run {
        status: out.status.code(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write_manifest(dir: &Path) -> PathBuf {
    let path = dir.join("manifest.json");
    std::fs::write(
        &path,
        r#"{"meshes": [
            {"name": "a_clean", "family": "straight", "n_u": 16, "n_z": 6, "height": 2.0},
            {"name": "b_noisy", "family": "wavy", "n_u": 16, "n_z": 6, "height": 2.0,
             "noise": 0.15, "seed": 11},
            {"name": "c_taper", "family": "tapered", "n_u": 16, "n_z": 6, "height": 2.0}
        ]}"#,
    )
    .unwrap();
    path
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.to_string())
        .collect()
}

/// Parse the vertex lines of an OBJ file.
fn obj_vertices(path: &Path) -> Vec<[f64; 3]> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("v "))
        .map(|l| {
            let mut it = l.split_whitespace().skip(1);
            let mut p = [0.0; 3];
            for c in p.iter_mut() {
                *c = it.next().unwrap().parse().unwrap();
            }
            p
        })
        .collect()
}

#[test]
fn synth_writes_the_corpus_deterministically() {
    let dir = tmp("synth");
    let manifest = write_manifest(&dir);
    let out1 = dir.join("c1");
    let out2 = dir.join("c2");
    for out in [&out1, &out2] {
        let r = run(
            &[
                "synth",
                "--manifest",
                manifest.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(r.status, Some(0), "stderr: {}", r.stderr);
    }
    for name in ["a_clean.obj", "b_noisy.obj", "c_taper.obj", "manifest.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn param_writes_artifacts_rows_and_is_deterministic() {
    let dir = tmp("param");
    let manifest = write_manifest(&dir);
    let out = dir.join("run");
    let args = [
        "param",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let r = run(&args, &[("TUBEMAP_THREADS", "2")]);
    assert_eq!(r.status, Some(0), "stderr: {}", r.stderr);

    for id in ["a_clean", "b_noisy", "c_taper"] {
        assert!(out.join(format!("{id}_tube.obj")).is_file());
        assert!(out.join(format!("{id}_coords.json")).is_file());
        assert!(out.join(format!("{id}_diag.json")).is_file());
    }
    let lines = csv_lines(&out.join("report.csv"));
    assert_eq!(lines.len(), 4, "header + one row per mesh");
    assert!(lines[0].starts_with("mesh_id,"));
    // Rows come back in manifest order even with two worker threads.
    assert!(lines[1].starts_with("a_clean,"));
    assert!(lines[2].starts_with("b_noisy,"));
    assert!(lines[3].starts_with("c_taper,"));

    // The coordinate sidecar matches the mesh size.
    let coords: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("a_clean_coords.json")).unwrap())
            .unwrap();
    assert!(coords["L_star"].as_f64().unwrap() > 0.0);
    assert_eq!(coords["u"].as_array().unwrap().len(), 16 * 6);
    assert_eq!(coords["z"].as_array().unwrap().len(), 16 * 6);

    // Diagnostics carry the per-face field and stage timings.
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("a_clean_diag.json")).unwrap())
            .unwrap();
    assert_eq!(diag["per_face_deg"].as_array().unwrap().len(), 16 * 5 * 2);
    assert!(diag["timings"]["initial_param"].as_f64().unwrap() >= 0.0);

    // Rerunning yields a byte-identical report.
    let first = std::fs::read(out.join("report.csv")).unwrap();
    let r = run(&args, &[("TUBEMAP_THREADS", "1")]);
    assert_eq!(r.status, Some(0));
    let second = std::fs::read(out.join("report.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn param_keeps_going_after_a_bad_mesh_and_exits_one() {
    let dir = tmp("param_err");
    // A disk (single boundary loop) is not a tube.
    std::fs::write(
        dir.join("disk.obj"),
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv -1 0 0\nv 0 -1 0\n\
         f 1 2 3\nf 1 3 4\nf 1 4 5\nf 1 5 2\n",
    )
    .unwrap();
    let manifest = write_manifest(&dir);
    let out = dir.join("run");
    let r = run(
        &[
            "param",
            dir.join("disk.obj").to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(1), "stdout: {}", r.stdout);
    let lines = csv_lines(&out.join("report.csv"));
    assert_eq!(lines.len(), 5, "three good rows plus one error row");
    let disk_row = lines.iter().find(|l| l.starts_with("disk,")).unwrap();
    assert!(disk_row.contains("error:"), "row: {disk_row}");
    // The good meshes still produced artifacts.
    assert!(out.join("a_clean_tube.obj").is_file());
}

#[test]
fn bend_produces_a_bent_mesh_and_passthrough_copies() {
    let dir = tmp("bend");
    let manifest = write_manifest(&dir);
    let corpus = dir.join("corpus");
    let run_dir = dir.join("run");
    assert_eq!(
        run(
            &[
                "synth",
                "--manifest",
                manifest.to_str().unwrap(),
                "--out",
                corpus.to_str().unwrap()
            ],
            &[]
        )
        .status,
        Some(0)
    );
    assert_eq!(
        run(
            &[
                "param",
                corpus.join("a_clean.obj").to_str().unwrap(),
                "--out",
                run_dir.to_str().unwrap()
            ],
            &[]
        )
        .status,
        Some(0)
    );

    let bend_out = dir.join("bent");
    let r = run(
        &[
            "bend",
            corpus.join("a_clean.obj").to_str().unwrap(),
            "--coords",
            run_dir.join("a_clean_coords.json").to_str().unwrap(),
            "--bend",
            "minor",
            "--rho",
            "2.0",
            "--out",
            bend_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(0), "stderr: {}", r.stderr);
    let bent = obj_vertices(&bend_out.join("a_clean_bent.obj"));
    assert_eq!(bent.len(), 16 * 6);
    // Every bent vertex lies on a torus of some major radius R with unit
    // minor radius: recover R from the report row and check membership.
    let row = &csv_lines(&bend_out.join("bend_report.csv"))[1];
    let label = row.rsplit(',').next().unwrap();
    let r_value: f64 = label.split("R=").nth(1).unwrap().parse().unwrap();
    // The OBJ stores nine significant digits, so allow for file rounding.
    for p in &bent {
        let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - r_value;
        let residual = (ring * ring + p[2] * p[2] - 1.0).abs();
        assert!(residual < 1e-7, "off torus by {residual}");
    }

    // Passthrough copy: identical positions, exit 0.
    let pass_out = dir.join("pass");
    let r = run(
        &[
            "bend",
            corpus.join("a_clean.obj").to_str().unwrap(),
            "--out",
            pass_out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(0), "stderr: {}", r.stderr);
    let src = obj_vertices(&corpus.join("a_clean.obj"));
    let copy = obj_vertices(&pass_out.join("a_clean_bent.obj"));
    assert_eq!(src, copy);
}

#[test]
fn config_errors_exit_two() {
    let dir = tmp("cfg");
    let out = dir.join("o");
    // Unknown mode value: rejected by the argument parser.
    let r = run(
        &["param", "x.obj", "--mode", "bogus", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(r.status, Some(2));

    // Bend without rho: rejected before any mesh is touched.
    let r = run(
        &["param", "x.obj", "--bend", "major", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(r.status, Some(2));
    assert!(r.stderr.contains("--rho"), "stderr: {}", r.stderr);

    // No inputs at all.
    let r = run(&["param", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(r.status, Some(2));

    // Broken thread count.
    let r = run(
        &["param", "x.obj", "--out", out.to_str().unwrap()],
        &[("TUBEMAP_THREADS", "zero")],
    );
    assert_eq!(r.status, Some(2));
    assert!(r.stderr.contains("TUBEMAP_THREADS"), "stderr: {}", r.stderr);

    // Inadmissible bend amount for the minor mode (must exceed 1).
    let dirm = tmp("cfg_bend");
    let manifest = write_manifest(&dirm);
    let corpus = dirm.join("c");
    assert_eq!(
        run(
            &[
                "synth",
                "--manifest",
                manifest.to_str().unwrap(),
                "--out",
                corpus.to_str().unwrap()
            ],
            &[]
        )
        .status,
        Some(0)
    );
    let runp = dirm.join("r");
    assert_eq!(
        run(
            &[
                "param",
                corpus.join("a_clean.obj").to_str().unwrap(),
                "--out",
                runp.to_str().unwrap()
            ],
            &[]
        )
        .status,
        Some(0)
    );
    let r = run(
        &[
            "bend",
            corpus.join("a_clean.obj").to_str().unwrap(),
            "--coords",
            runp.join("a_clean_coords.json").to_str().unwrap(),
            "--bend",
            "minor",
            "--rho",
            "0.5",
            "--out",
            dirm.join("b").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(2), "stderr: {}", r.stderr);
}
