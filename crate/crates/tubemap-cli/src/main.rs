//! Batch front end for the tube parameterization library: synthesize tube
//! corpora, parameterize meshes onto the standard tube, and bend
//! parameterized tubes onto tori.
//!
//! Exit codes: 0 on success, 1 when any mesh in a batch failed, 2 on
//! configuration errors (bad flags, unreadable manifests, inadmissible bend
//! parameters).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use tubemap::bend::{admissible_radius, bend_tube, BendMode};
use tubemap::extend::{parameterize_free, ExtensionConfig};
use tubemap::io::{load_mesh, save_mesh_obj, save_obj};
use tubemap::metrics::{
    angular_distortion, beltrami_summary, per_face_distortion_deg, write_report_csv,
    write_report_json, ReportRow,
};
use tubemap::synth::{default_corpus, generate_tube, read_manifest, write_manifest, TubeSpec};
use tubemap::tube::{
    parameterize_fixed, tube_beltrami, FixedParams, FixedReport, TubeCoords,
};
use tubemap::TriMesh;

#[derive(Parser)]
#[command(
    name = "tubemap",
    version,
    about = "Conformal tube parameterization, seam correction, and toroidal bending"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tube corpus as OBJ files plus a manifest copy.
    Synth(SynthArgs),
    /// Parameterize meshes onto the standard tube and report distortion.
    Param(ParamArgs),
    /// Bend one parameterized mesh onto a torus.
    Bend(BendArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Corpus manifest (JSON object with a "meshes" list); the built-in
    /// 42-mesh corpus when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ParamArgs {
    /// Input OBJ meshes.
    inputs: Vec<PathBuf>,
    /// Corpus manifest; its meshes are generated in memory and processed
    /// before any positional inputs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Boundary treatment.
    #[arg(long, value_enum, default_value = "fixed")]
    mode: Mode,
    /// Seam-strip half-width, as a fraction of pi, for the correction stage.
    #[arg(long, default_value_t = 0.05)]
    d: f64,
    /// Extension layers per boundary (free mode).
    #[arg(long = "K", default_value_t = 1)]
    k: usize,
    /// Extension direction blend from lateral (0) to normal (1) (free mode).
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    /// Extension ring smoothing weight (free mode).
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    /// Fail on non-admissible Beltrami coefficients instead of clamping them.
    #[arg(long = "strict-mu")]
    strict_mu: bool,
    /// Toroidal bend applied after parameterization.
    #[arg(long, value_enum, default_value = "none")]
    bend: BendChoice,
    /// Bend amount: with --bend major a fraction in (0, 1) of the admissible
    /// radius interval, with --bend minor a factor > 1 on the minimal
    /// admissible radius.
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Batch report format (written as report.csv or report.json).
    #[arg(long, value_enum, default_value = "csv")]
    report: ReportFormat,
}

#[derive(clap::Args)]
struct BendArgs {
    /// Source surface OBJ (the mesh that was parameterized).
    input: PathBuf,
    /// Tube-coordinate sidecar JSON; inferred from the input name when
    /// omitted (`foo.obj` or `foo_tube.obj` -> `foo_coords.json`).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Bend mode; `none` writes an unbent passthrough copy.
    #[arg(long, value_enum, default_value = "none")]
    bend: BendChoice,
    /// Bend amount (see `param --rho`).
    #[arg(long)]
    rho: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Report format (written as bend_report.csv or bend_report.json).
    #[arg(long, value_enum, default_value = "csv")]
    report: ReportFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fixed,
    Free,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BendChoice {
    None,
    Major,
    Minor,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

/// Per-vertex tube coordinates persisted next to the parameterized mesh so
/// bending can run as a separate step.
#[derive(Serialize, Deserialize)]
struct CoordsFile {
    #[serde(rename = "L_star")]
    l_star: f64,
    u: Vec<f64>,
    z: Vec<f64>,
}

/// Diagnostics written per mesh: the pipeline report plus the per-face mean
/// angle difference in degrees (null for degenerate faces).
#[derive(Serialize)]
struct DiagFile<'a> {
    #[serde(flatten)]
    report: &'a FixedReport,
    per_face_deg: &'a [f64],
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|()| true),
        Command::Param(a) => cmd_param(a),
        Command::Bend(a) => cmd_bend(a).map(|()| true),
    };
    match outcome {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let specs = load_specs(&a.manifest)?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    for spec in &specs {
        let mesh = generate_tube(spec).with_context(|| format!("generating '{}'", spec.name))?;
        let path = a.out.join(format!("{}.obj", spec.name));
        save_mesh_obj(&path, &mesh).with_context(|| format!("writing {}", path.display()))?;
    }
    write_manifest(&a.out.join("manifest.json"), &specs)?;
    println!("wrote {} meshes to {}", specs.len(), a.out.display());
    Ok(())
}

fn load_specs(manifest: &Option<PathBuf>) -> Result<Vec<TubeSpec>> {
    match manifest {
        Some(p) => {
            read_manifest(p).with_context(|| format!("reading manifest {}", p.display()))
        }
        None => Ok(default_corpus()),
    }
}

/// One unit of batch work: a mesh to load from disk or to synthesize.
enum Source {
    Path(PathBuf),
    Spec(TubeSpec),
}

struct Job {
    id: String,
    source: Source,
}

struct ParamConfig {
    mode: Mode,
    fixed: FixedParams,
    ext: ExtensionConfig,
    bend: Option<(BendMode, f64)>,
}

impl ParamConfig {
    fn stage_label(&self) -> String {
        match self.mode {
            Mode::Fixed => format!("fixed d={}", self.fixed.d),
            Mode::Free => format!(
                "free K={} tau={} omega={} d={}",
                self.ext.layers, self.ext.tau, self.ext.omega, self.fixed.d
            ),
        }
    }
}

fn cmd_param(a: &ParamArgs) -> Result<bool> {
    if a.inputs.is_empty() && a.manifest.is_none() {
        bail!("nothing to do: pass OBJ paths or --manifest");
    }
    if !(a.d >= 0.0 && a.d <= 1.0) {
        bail!("--d must lie in [0, 1], got {}", a.d);
    }
    if a.k == 0 {
        bail!("--K must be at least 1");
    }
    if !(a.tau >= 0.0 && a.tau <= 1.0) {
        bail!("--tau must lie in [0, 1], got {}", a.tau);
    }
    if !(a.omega >= 0.0) {
        bail!("--omega must be nonnegative, got {}", a.omega);
    }
    let cfg = ParamConfig {
        mode: a.mode,
        fixed: FixedParams {
            d: a.d,
            strict_mu: a.strict_mu,
        },
        ext: ExtensionConfig {
            layers: a.k,
            tau: a.tau,
            omega: a.omega,
        },
        bend: bend_selection(a.bend, a.rho)?,
    };

    let mut jobs = Vec::new();
    if let Some(p) = &a.manifest {
        for spec in
            read_manifest(p).with_context(|| format!("reading manifest {}", p.display()))?
        {
            jobs.push(Job {
                id: spec.name.clone(),
                source: Source::Spec(spec),
            });
        }
    }
    for p in &a.inputs {
        jobs.push(Job {
            id: file_id(p),
            source: Source::Path(p.clone()),
        });
    }
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;

    let threads = thread_count(jobs.len())?;
    let results = run_jobs(jobs.len(), threads, |i| {
        process_mesh(&jobs[i], &cfg, &a.out).map_err(|e| format!("{e:#}"))
    });

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(mut r) => rows.append(&mut r),
            Err(msg) => {
                failures += 1;
                eprintln!("{}: {msg}", job.id);
                rows.push(error_row(&job.id, &msg));
            }
        }
    }
    let report_path = write_report(&a.out, a.report, &rows)?;
    println!(
        "parameterized {} of {} meshes; report: {}",
        jobs.len() - failures,
        jobs.len(),
        report_path.display()
    );
    Ok(failures == 0)
}

/// Run `n` jobs on `threads` workers, returning results in job order. A
/// panicking job is reported as an error instead of tearing down the batch.
fn run_jobs<T: Send>(
    n: usize,
    threads: usize,
    work: impl Fn(usize) -> Result<T, String> + Sync,
) -> Vec<Result<T, String>> {
    let slots: Vec<Mutex<Option<Result<T, String>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result =
                    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(i)))
                        .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("job slot filled"))
        .collect()
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

fn process_mesh(job: &Job, cfg: &ParamConfig, out: &Path) -> Result<Vec<ReportRow>> {
    let mesh = match &job.source {
        Source::Path(p) => {
            load_mesh(p).with_context(|| format!("loading {}", p.display()))?
        }
        Source::Spec(s) => generate_tube(s).with_context(|| format!("generating '{}'", s.name))?,
    };
    let (coords, report) = match cfg.mode {
        Mode::Fixed => parameterize_fixed(&mesh, &cfg.fixed)?,
        Mode::Free => parameterize_free(&mesh, &cfg.ext, &cfg.fixed)?,
    };
    let positions = coords.positions();

    let obj_path = out.join(format!("{}_tube.obj", job.id));
    save_obj(&obj_path, &positions, mesh.faces())
        .with_context(|| format!("writing {}", obj_path.display()))?;
    write_coords(&out.join(format!("{}_coords.json", job.id)), &coords)?;

    let per_face = per_face_distortion_deg(&mesh, &positions);
    let diag = DiagFile {
        report: &report,
        per_face_deg: &per_face,
    };
    let diag_path = out.join(format!("{}_diag.json", job.id));
    let diag_file = std::fs::File::create(&diag_path)
        .with_context(|| format!("creating {}", diag_path.display()))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(diag_file), &diag)
        .with_context(|| format!("writing {}", diag_path.display()))?;

    let (mu_mean_sq, mu_max) = mu_columns(&mesh, &coords);
    let mut rows = vec![ReportRow {
        mesh_id: job.id.clone(),
        n_vertices: mesh.n_vertices(),
        n_faces: mesh.n_faces(),
        mean_deg: report.distortion_corrected.mean_deg,
        median_deg: report.distortion_corrected.median_deg,
        max_deg: report.distortion_corrected.max_deg,
        flipped_faces: report.flipped_faces,
        mu_mean_sq,
        mu_max,
        stage_label: cfg.stage_label(),
    }];

    if let Some((mode, rho)) = cfg.bend {
        let r = bend_radius(&coords, mode, rho)?;
        let bent = bend_tube(&coords, mode, r)?;
        let bent_path = out.join(format!("{}_bent.obj", job.id));
        save_obj(&bent_path, &bent, mesh.faces())
            .with_context(|| format!("writing {}", bent_path.display()))?;
        let rep = angular_distortion(&mesh, &bent);
        rows.push(ReportRow {
            mesh_id: job.id.clone(),
            n_vertices: mesh.n_vertices(),
            n_faces: mesh.n_faces(),
            mean_deg: rep.mean_deg,
            median_deg: rep.median_deg,
            max_deg: rep.max_deg,
            flipped_faces: rep.flipped_faces,
            mu_mean_sq,
            mu_max,
            stage_label: bend_label(mode, rho, r),
        });
    }
    Ok(rows)
}

fn cmd_bend(a: &BendArgs) -> Result<()> {
    let selection = bend_selection(a.bend, a.rho)?;
    let mesh =
        load_mesh(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let id = file_id(&a.input);
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    let bent_path = a.out.join(format!("{id}_bent.obj"));

    let row = match selection {
        None => {
            // Passthrough: copy the source mesh unchanged.
            save_mesh_obj(&bent_path, &mesh)
                .with_context(|| format!("writing {}", bent_path.display()))?;
            let rep = angular_distortion(&mesh, mesh.vertices());
            ReportRow {
                mesh_id: id.clone(),
                n_vertices: mesh.n_vertices(),
                n_faces: mesh.n_faces(),
                mean_deg: rep.mean_deg,
                median_deg: rep.median_deg,
                max_deg: rep.max_deg,
                flipped_faces: rep.flipped_faces,
                mu_mean_sq: f64::NAN,
                mu_max: f64::NAN,
                stage_label: "bend none (passthrough)".to_string(),
            }
        }
        Some((mode, rho)) => {
            let coords_path = a
                .coords
                .clone()
                .unwrap_or_else(|| infer_coords_path(&a.input));
            let coords = read_coords(&coords_path, mesh.n_vertices())?;
            let r = bend_radius(&coords, mode, rho)?;
            let bent = bend_tube(&coords, mode, r)?;
            save_obj(&bent_path, &bent, mesh.faces())
                .with_context(|| format!("writing {}", bent_path.display()))?;
            let rep = angular_distortion(&mesh, &bent);
            let (mu_mean_sq, mu_max) = mu_columns(&mesh, &coords);
            ReportRow {
                mesh_id: id.clone(),
                n_vertices: mesh.n_vertices(),
                n_faces: mesh.n_faces(),
                mean_deg: rep.mean_deg,
                median_deg: rep.median_deg,
                max_deg: rep.max_deg,
                flipped_faces: rep.flipped_faces,
                mu_mean_sq,
                mu_max,
                stage_label: bend_label(mode, rho, r),
            }
        }
    };
    let report_path = match a.report {
        ReportFormat::Csv => {
            let p = a.out.join("bend_report.csv");
            write_report_csv(&p, std::slice::from_ref(&row))?;
            p
        }
        ReportFormat::Json => {
            let p = a.out.join("bend_report.json");
            write_report_json(&p, std::slice::from_ref(&row))?;
            p
        }
    };
    println!(
        "wrote {}; report: {}",
        bent_path.display(),
        report_path.display()
    );
    Ok(())
}

fn bend_selection(choice: BendChoice, rho: Option<f64>) -> Result<Option<(BendMode, f64)>> {
    match choice {
        BendChoice::None => {
            if rho.is_some() {
                bail!("--rho requires --bend major or --bend minor");
            }
            Ok(None)
        }
        BendChoice::Major => Ok(Some((
            BendMode::Major,
            rho.ok_or_else(|| anyhow!("--bend major requires --rho"))?,
        ))),
        BendChoice::Minor => Ok(Some((
            BendMode::Minor,
            rho.ok_or_else(|| anyhow!("--bend minor requires --rho"))?,
        ))),
    }
}

/// Turn the relative bend amount into an absolute admissible radius for the
/// height range of `coords`.
fn bend_radius(coords: &TubeCoords, mode: BendMode, rho: f64) -> Result<f64> {
    let z_min = coords.z.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_max = coords.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(admissible_radius(mode, z_max - z_min, rho)?)
}

fn bend_label(mode: BendMode, rho: f64, r: f64) -> String {
    let name = match mode {
        BendMode::Major => "major",
        BendMode::Minor => "minor",
    };
    format!("bend {name} rho={rho} R={r}")
}

fn mu_columns(mesh: &TriMesh, coords: &TubeCoords) -> (f64, f64) {
    match tube_beltrami(mesh, coords) {
        Ok(mu) => {
            let areas = mesh.face_areas();
            let s = beltrami_summary(&mu, &areas);
            (s.mean_sq, s.max_abs)
        }
        Err(_) => (f64::NAN, f64::NAN),
    }
}

fn error_row(id: &str, msg: &str) -> ReportRow {
    ReportRow {
        mesh_id: id.to_string(),
        n_vertices: 0,
        n_faces: 0,
        mean_deg: f64::NAN,
        median_deg: f64::NAN,
        max_deg: f64::NAN,
        flipped_faces: 0,
        mu_mean_sq: f64::NAN,
        mu_max: f64::NAN,
        stage_label: format!("error: {msg}"),
    }
}

fn write_report(out: &Path, format: ReportFormat, rows: &[ReportRow]) -> Result<PathBuf> {
    let path = match format {
        ReportFormat::Csv => {
            let p = out.join("report.csv");
            write_report_csv(&p, rows)?;
            p
        }
        ReportFormat::Json => {
            let p = out.join("report.json");
            write_report_json(&p, rows)?;
            p
        }
    };
    Ok(path)
}

fn write_coords(path: &Path, coords: &TubeCoords) -> Result<()> {
    let file = CoordsFile {
        l_star: coords.length,
        u: coords.u.clone(),
        z: coords.z.clone(),
    };
    let out =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer(std::io::BufWriter::new(out), &file)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_coords(path: &Path, n_vertices: usize) -> Result<TubeCoords> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading coordinates {}", path.display()))?;
    let file: CoordsFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if file.u.len() != n_vertices || file.z.len() != n_vertices {
        bail!(
            "{}: coordinate count ({} u, {} z) does not match the mesh ({} vertices)",
            path.display(),
            file.u.len(),
            file.z.len(),
            n_vertices
        );
    }
    if !file.l_star.is_finite() || file.l_star <= 0.0 {
        bail!("{}: L_star must be a positive number", path.display());
    }
    Ok(TubeCoords {
        u: file.u,
        z: file.z,
        length: file.l_star,
    })
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".to_string())
}

/// `foo.obj` or `foo_tube.obj` -> `foo_coords.json` next to the input.
fn infer_coords_path(input: &Path) -> PathBuf {
    let stem = file_id(input);
    let base = stem.strip_suffix("_tube").unwrap_or(&stem);
    input.with_file_name(format!("{base}_coords.json"))
}

fn thread_count(jobs: usize) -> Result<usize> {
    let n = match std::env::var("TUBEMAP_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| anyhow!("TUBEMAP_THREADS must be a positive integer, got '{s}'"))?,
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    Ok(n.min(jobs.max(1)))
}
