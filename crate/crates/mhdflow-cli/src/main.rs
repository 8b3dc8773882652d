//! Command-line front end: build flows from scene files and verify,
//! transform, trace, classify, or export them.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or schema error,
//! 3 numerical failure (divergent solve, singularity, vanishing profile).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mhdflow::geometry::{
    self, export_classification, export_fields, export_mesh, export_polyline, export_sheet,
    ExportFormat,
};
use mhdflow::scene::{SceneFile, TransformSpec};
use mhdflow::transforms::{current_sheet, current_sheet_oracle, CurrentSheetSpec};
use mhdflow::verify::{
    fd_crosscheck, reduced_residual_table, verify_physical, verify_reduced, GridSpec,
    ResidualReport, ANALYTIC_TOL, FD_TOL,
};
use mhdflow::Error;

/// Formula and oracle currents must agree to this for a sheet run to pass.
const SHEET_AGREEMENT_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "mhdflow",
    version,
    about = "Exact constant-total-pressure MHD flows: build, verify, transform, export"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug)]
struct Grid3([usize; 3]);

#[derive(Clone, Copy, Debug)]
struct Grid2([usize; 2]);

fn parse_res(s: &str, what: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<_> = s.split('x').collect();
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        let n: usize = p
            .parse()
            .map_err(|_| format!("{what} \"{s}\" is not N or N1xN2..."))?;
        if n == 0 {
            return Err(format!("{what} \"{s}\" has a zero axis"));
        }
        out.push(n);
    }
    Ok(out)
}

fn parse_grid3(s: &str) -> Result<Grid3, String> {
    match parse_res(s, "grid")?[..] {
        [n] => Ok(Grid3([n, n, n])),
        [a, b, c] => Ok(Grid3([a, b, c])),
        _ => Err(format!("grid \"{s}\" must be N or N1xN2xN3")),
    }
}

fn parse_grid2(s: &str) -> Result<Grid2, String> {
    match parse_res(s, "grid")?[..] {
        [n] => Ok(Grid2([n, n])),
        [a, b] => Ok(Grid2([a, b])),
        _ => Err(format!("grid \"{s}\" must be N or N1xN2")),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum OutputFormat {
    Obj,
    Vtk,
    Csv,
    Json,
    Text,
}

impl OutputFormat {
    fn export(self, what: &'static str) -> Result<ExportFormat, Error> {
        match self {
            OutputFormat::Obj => Ok(ExportFormat::Obj),
            OutputFormat::Vtk => Ok(ExportFormat::VtkLegacy),
            OutputFormat::Csv => Ok(ExportFormat::Csv),
            OutputFormat::Json | OutputFormat::Text => Err(Error::UnsupportedFormat {
                what,
                format: if self == OutputFormat::Json { "json" } else { "text" },
            }),
        }
    }
}

/// Flags shared by every subcommand that reads a scene.
#[derive(Args)]
struct SceneArg {
    /// Scene file (JSON).
    #[arg(long)]
    scene: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the scene and check it against the reduced system, the full
    /// equations, and a finite-difference derivative cross-check.
    Verify {
        #[command(flatten)]
        scene: SceneArg,
        /// Grid resolution: N or N1xN2xN3.
        #[arg(long, value_parser = parse_grid3, default_value = "21")]
        grid: Grid3,
        /// Residual tolerance for the analytic checks.
        #[arg(long, default_value_t = ANALYTIC_TOL)]
        tol: f64,
        /// Step for the finite-difference cross-check.
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
        /// Also dump per-point reduced residuals as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report form: json (default) or text.
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
    },
    /// Tessellate constant-k3 surfaces and write one mesh per level.
    ExportSurface {
        #[command(flatten)]
        scene: SceneArg,
        /// Comma-separated k3 levels.
        #[arg(long, value_delimiter = ',', required = true)]
        k3: Vec<f64>,
        /// Vertices per axis: N or N1xN2.
        #[arg(long, value_parser = parse_grid2, default_value = "32")]
        grid: Grid2,
        /// Weld the duplicated k2 seam when the surface closes.
        #[arg(long)]
        weld: bool,
        /// Output path; extra levels insert "-k3-<value>" before the extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Obj)]
        format: OutputFormat,
    },
    /// Sample field lines from a seeds file (JSON array of
    /// {"kind", "k0", "s", "n"}) and export them.
    Trace {
        #[command(flatten)]
        scene: SceneArg,
        /// Seeds file.
        #[arg(long)]
        seeds: PathBuf,
        /// Output path; extra seeds insert "-<index>" before the extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
    /// Append symmetry transforms to a scene and write the new scene file.
    Transform {
        #[command(flatten)]
        scene: SceneArg,
        /// Field-scaling profile phi(k3).
        #[arg(long)]
        phi: Option<String>,
        /// Translation psi(k3) added to k1.
        #[arg(long)]
        psi: Option<String>,
        /// Translation chi(k3) added to k2.
        #[arg(long)]
        chi: Option<String>,
        /// Where to write the transformed scene.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the surface current of a tangential discontinuity and check
    /// it against the independent jump oracle.
    CurrentSheet {
        #[command(flatten)]
        scene: SceneArg,
        /// Jump level k3 = c (defaults to the scene's current_sheet block).
        #[arg(long)]
        c: Option<f64>,
        /// Scaling profile value below the sheet.
        #[arg(long)]
        phi_minus: Option<f64>,
        /// Scaling profile value above the sheet.
        #[arg(long)]
        phi_plus: Option<f64>,
        /// Samples over (k1, k2): N or N1xN2.
        #[arg(long, value_parser = parse_grid2)]
        grid: Option<Grid2>,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every grid point by its Alfvén discriminant.
    Classify {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long, value_parser = parse_grid3, default_value = "21")]
        grid: Grid3,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample position, v, B, and p on a grid.
    SampleFields {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long, value_parser = parse_grid3, default_value = "21")]
        grid: Grid3,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
}

/// Exit code for an error: 2 for usage/schema/domain/IO, 3 for numerics.
fn error_code(e: &Error) -> u8 {
    match e {
        Error::Scene(_)
        | Error::Syntax { .. }
        | Error::UnknownFunction { .. }
        | Error::UnboundVariable { .. }
        | Error::WrongVariables { .. }
        | Error::OutsideDomain { .. }
        | Error::DomainNotCovered { .. }
        | Error::BadGrid(_)
        | Error::EmptyExport(_)
        | Error::UnsupportedFormat { .. }
        | Error::Io(_) => 2,
        Error::EvalDomain { .. }
        | Error::NotAreaPreserving { .. }
        | Error::SingularInDomain { .. }
        | Error::NewtonDiverged { .. }
        | Error::DegenerateHodograph { .. }
        | Error::NotVolumePreserving { .. }
        | Error::PhiVanishes { .. }
        | Error::BadSheet(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

/// Combined verify output: the three reports and the overall verdict.
#[derive(Serialize)]
struct VerifyOutput {
    scene: String,
    reduced: ResidualReport,
    physical: ResidualReport,
    fd: ResidualReport,
    pass: bool,
}

fn run(cmd: Cmd) -> Result<u8, Error> {
    match cmd {
        Cmd::Verify {
            scene,
            grid,
            tol,
            fd_step,
            out,
            format,
        } => cmd_verify(&scene.scene, grid, tol, fd_step, out.as_deref(), format),
        Cmd::ExportSurface {
            scene,
            k3,
            grid,
            weld,
            out,
            format,
        } => cmd_export_surface(&scene.scene, &k3, grid, weld, &out, format),
        Cmd::Trace {
            scene,
            seeds,
            out,
            format,
        } => cmd_trace(&scene.scene, &seeds, &out, format),
        Cmd::Transform {
            scene,
            phi,
            psi,
            chi,
            out,
        } => cmd_transform(&scene.scene, phi, psi, chi, &out),
        Cmd::CurrentSheet {
            scene,
            c,
            phi_minus,
            phi_plus,
            grid,
            out,
        } => cmd_current_sheet(&scene.scene, c, phi_minus, phi_plus, grid, &out),
        Cmd::Classify { scene, grid, out } => cmd_classify(&scene.scene, grid, &out),
        Cmd::SampleFields {
            scene,
            grid,
            out,
            format,
        } => cmd_sample_fields(&scene.scene, grid, &out, format),
    }
}

fn cmd_verify(
    scene_path: &Path,
    grid: Grid3,
    tol: f64,
    fd_step: f64,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<u8, Error> {
    let scene = SceneFile::load(scene_path)?;
    let m = scene.build()?;
    let grid = GridSpec { res: grid.0 };
    let reduced = verify_reduced(&m, &grid, tol)?;
    let physical = verify_physical(&m, &grid, tol)?;
    let fd = fd_crosscheck(&m, &grid, fd_step, FD_TOL)?;
    let pass = reduced.pass && physical.pass && fd.pass;

    if let Some(path) = out {
        let mut csv = String::from("k1,k2,k3,x1.x12+P1,x2.x12+P2,x3.x12+P3,det(J)-1\n");
        for (k, r) in reduced_residual_table(&m, &grid)? {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                k[0], k[1], k[2], r[0], r[1], r[2], r[3]
            );
        }
        std::fs::write(path, csv)?;
    }

    match format {
        OutputFormat::Json => {
            let output = VerifyOutput {
                scene: scene_path.display().to_string(),
                reduced,
                physical,
                fd,
                pass,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&output).expect("report serialization cannot fail")
            );
        }
        OutputFormat::Text => {
            println!("{reduced}\n\n{physical}\n\n{fd}\n");
            println!("overall: {}", if pass { "PASS" } else { "FAIL" });
        }
        other => {
            return Err(Error::UnsupportedFormat {
                what: "verification report",
                format: if other == OutputFormat::Obj { "obj" } else { "csv" },
            })
        }
    }
    Ok(u8::from(!pass))
}

/// Insert a suffix between a path's stem and extension.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn cmd_export_surface(
    scene_path: &Path,
    levels: &[f64],
    grid: Grid2,
    weld: bool,
    out: &Path,
    format: OutputFormat,
) -> Result<u8, Error> {
    let format = format.export("surface mesh")?;
    let m = SceneFile::load(scene_path)?.build()?;
    let k1 = m.domain().k1;
    let k2 = m.domain().k2;
    for &c in levels {
        let mut mesh = geometry::tessellate_surface(&m, c, k1, k2, grid.0)?;
        let welded = weld && mesh.weld_seam();
        let path = if levels.len() == 1 {
            out.to_path_buf()
        } else {
            with_suffix(out, &format!("-k3-{c}"))
        };
        export_mesh(&mesh, format, &path)?;
        println!(
            "wrote {} ({} vertices, {} faces, {} degenerate{})",
            path.display(),
            mesh.vertices.len(),
            mesh.faces.len(),
            mesh.degenerate_faces.len(),
            if welded { ", seam welded" } else { "" }
        );
    }
    Ok(0)
}

fn cmd_trace(
    scene_path: &Path,
    seeds_path: &Path,
    out: &Path,
    format: OutputFormat,
) -> Result<u8, Error> {
    let format = format.export("field line")?;
    let m = SceneFile::load(scene_path)?.build()?;
    let seeds = mhdflow::scene::load_seeds(seeds_path)?;
    if seeds.is_empty() {
        return Err(Error::EmptyExport("seed list"));
    }
    for (i, seed) in seeds.iter().enumerate() {
        let line = geometry::field_line(&m, seed.kind, seed.k0, seed.s, seed.n)?;
        let path = if seeds.len() == 1 {
            out.to_path_buf()
        } else {
            with_suffix(out, &format!("-{i}"))
        };
        export_polyline(&line, format, &path)?;
        let tangency = geometry::tangency_error(&m, &line)?;
        println!(
            "wrote {} ({}, {} samples{}, max tangent deviation {:.3e})",
            path.display(),
            line.kind.label(),
            line.len(),
            if line.truncated { ", truncated" } else { "" },
            tangency
        );
    }
    Ok(0)
}

fn cmd_transform(
    scene_path: &Path,
    phi: Option<String>,
    psi: Option<String>,
    chi: Option<String>,
    out: &Path,
) -> Result<u8, Error> {
    if phi.is_none() && psi.is_none() && chi.is_none() {
        return Err(Error::Scene(
            "transform needs at least one of --phi, --psi, --chi".into(),
        ));
    }
    let mut scene = SceneFile::load(scene_path)?;
    if let Some(phi) = phi {
        scene.transforms.push(TransformSpec::Bogoyavlenskij(phi));
    }
    if psi.is_some() || chi.is_some() {
        scene.transforms.push(TransformSpec::Translate([
            psi.unwrap_or_else(|| "0".into()),
            chi.unwrap_or_else(|| "0".into()),
        ]));
    }
    // Build once so a bad profile fails here, not in the written file.
    scene.build()?;
    std::fs::write(out, scene.to_json())?;
    println!(
        "wrote {} ({} transform(s) in chain)",
        out.display(),
        scene.transforms.len()
    );
    Ok(0)
}

fn cmd_current_sheet(
    scene_path: &Path,
    c: Option<f64>,
    phi_minus: Option<f64>,
    phi_plus: Option<f64>,
    grid: Option<Grid2>,
    out: &Path,
) -> Result<u8, Error> {
    let scene = SceneFile::load(scene_path)?;
    let defaults = scene.current_sheet;
    let pick = |flag: Option<f64>, stored: Option<f64>, name: &str| -> Result<f64, Error> {
        flag.or(stored).ok_or_else(|| {
            Error::Scene(format!(
                "--{name} not given and the scene has no current_sheet block"
            ))
        })
    };
    let spec = CurrentSheetSpec {
        c: pick(c, defaults.map(|d| d.c), "c")?,
        phi_minus: pick(phi_minus, defaults.map(|d| d.phi_minus), "phi-minus")?,
        phi_plus: pick(phi_plus, defaults.map(|d| d.phi_plus), "phi-plus")?,
        res: grid
            .map(|g| g.0)
            .or(defaults.map(|d| d.res))
            .unwrap_or([32, 32]),
    };
    let m = scene.build()?;
    let formula = current_sheet(&m, &spec)?;
    let oracle = current_sheet_oracle(&m, &spec)?;

    let mut max_dev = 0.0f64;
    let mut max_tangency = 0.0f64;
    let mut max_j = 0.0f64;
    for (f, o) in formula.iter().zip(&oracle) {
        max_dev = max_dev.max((f.j - o.j).norm());
        max_tangency = max_tangency.max(f.j.dot(f.n).abs());
        max_j = max_j.max(f.j.norm());
    }
    export_sheet(&formula, ExportFormat::Csv, out)?;

    let pass = max_dev <= SHEET_AGREEMENT_TOL && max_tangency <= SHEET_AGREEMENT_TOL;
    println!(
        "current sheet at k3 = {} (phi- = {}, phi+ = {}), {} samples -> {}",
        spec.c,
        spec.phi_minus,
        spec.phi_plus,
        formula.len(),
        out.display()
    );
    println!("max |J|:            {max_j:.6e}");
    println!("max |J - J_oracle|: {max_dev:.3e}");
    println!("max |J . n|:        {max_tangency:.3e}");
    println!(
        "oracle agreement:   {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(u8::from(!pass))
}

fn cmd_classify(scene_path: &Path, grid: Grid3, out: &Path) -> Result<u8, Error> {
    let m = SceneFile::load(scene_path)?.build()?;
    let samples = geometry::classify_grid(&m, &GridSpec { res: grid.0 })?;
    export_classification(&samples, ExportFormat::Csv, out)?;
    let mut counts = std::collections::BTreeMap::new();
    for s in &samples {
        *counts.entry(s.regime.label()).or_insert(0usize) += 1;
    }
    let summary = counts
        .iter()
        .map(|(label, n)| format!("{label} {n}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!(
        "classified {} points -> {} ({summary})",
        samples.len(),
        out.display()
    );
    Ok(0)
}

fn cmd_sample_fields(
    scene_path: &Path,
    grid: Grid3,
    out: &Path,
    format: OutputFormat,
) -> Result<u8, Error> {
    let format = format.export("field samples")?;
    let m = SceneFile::load(scene_path)?.build()?;
    let samples = geometry::sample_fields(&m, &GridSpec { res: grid.0 })?;
    export_fields(&samples, format, out)?;
    println!("wrote {} samples -> {}", samples.len(), out.display());
    Ok(0)
}
