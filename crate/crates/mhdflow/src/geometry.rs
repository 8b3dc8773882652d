//! Extraction of geometric objects from a flow map: field lines, constant-k³
//! surface meshes, regime classification grids, and plain-text exporters
//! (Wavefront OBJ, legacy ASCII VTK, CSV).
//!
//! Field lines never integrate anything: both line kinds are straight lines
//! in label space, so every sample comes from the exact parametric formula.
//! A Runge–Kutta tracer is provided purely as an independent cross-check.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmap::{FlowMap, MachRegime};
use crate::linalg::{linspace, Vec3};
use crate::verify::GridSpec;

/// A face is degenerate when the parametric area element `|x_1 x x_2|`
/// drops below this at any of its corners.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Two seam vertices are welded when they coincide to within this distance.
pub const WELD_TOL: f64 = 1e-9;

/// Which commuting combination a field line follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    /// Integral curve of the velocity `v`.
    Streamline,
    /// Integral curve of the magnetic field `B`.
    Magnetic,
}

impl LineKind {
    /// Direction of the line in label space, in units of the arc parameter.
    ///
    /// `x(k0 + s*dir)` has tangent `J * dir`, which is exactly `v` for the
    /// streamline direction `(1/2, 1/2, 0)` and exactly `B` for the magnetic
    /// direction `(-1/2, 1/2, 0)`.
    pub fn direction(self) -> [f64; 3] {
        match self {
            LineKind::Streamline => [0.5, 0.5, 0.0],
            LineKind::Magnetic => [-0.5, 0.5, 0.0],
        }
    }

    /// Lowercase name used in exports.
    pub fn label(self) -> &'static str {
        match self {
            LineKind::Streamline => "streamline",
            LineKind::Magnetic => "magnetic",
        }
    }
}

/// A sampled field line: positions `x(s)` at uniformly spaced parameter
/// values, truncated at the domain boundary if the seed ray exits.
#[derive(Debug, Clone)]
pub struct Polyline {
    /// Which field the line follows.
    pub kind: LineKind,
    /// Label-space seed `k0` the line passes through at `s = 0`.
    pub seed: [f64; 3],
    /// Parameter value of each sample.
    pub s: Vec<f64>,
    /// Position of each sample.
    pub points: Vec<Vec3>,
    /// True when the requested parameter range left the domain and the
    /// line was cut short.
    pub truncated: bool,
}

impl Polyline {
    /// Number of retained samples.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when no sample survived truncation.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label-space point of sample `i`.
    pub fn label_point(&self, i: usize) -> [f64; 3] {
        let d = self.kind.direction();
        let s = self.s[i];
        [
            self.seed[0] + d[0] * s,
            self.seed[1] + d[1] * s,
            self.seed[2] + d[2] * s,
        ]
    }
}

/// Sample a field line through `k0` from the exact parametric formula.
///
/// The parameter runs over `n` uniform samples of `s_range`. Samples are
/// kept in order until the first one whose label point leaves the domain;
/// the rest are dropped and the line is flagged as truncated.
pub fn field_line(
    m: &FlowMap,
    kind: LineKind,
    k0: [f64; 3],
    s_range: [f64; 2],
    n: usize,
) -> Result<Polyline> {
    if n == 0 {
        return Err(Error::BadGrid("field line needs at least one sample".into()));
    }
    let d = kind.direction();
    let mut s_vals = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut truncated = false;
    for s in linspace(s_range[0], s_range[1], n) {
        let k = [k0[0] + d[0] * s, k0[1] + d[1] * s, k0[2] + d[2] * s];
        if !m.domain().contains(k) {
            truncated = true;
            break;
        }
        points.push(m.position(k)?);
        s_vals.push(s);
    }
    Ok(Polyline {
        kind,
        seed: k0,
        s: s_vals,
        points,
        truncated,
    })
}

/// Convenience wrapper for [`field_line`] with [`LineKind::Streamline`].
pub fn streamline(m: &FlowMap, k0: [f64; 3], s_range: [f64; 2], n: usize) -> Result<Polyline> {
    field_line(m, LineKind::Streamline, k0, s_range, n)
}

/// Convenience wrapper for [`field_line`] with [`LineKind::Magnetic`].
pub fn magnetic_line(m: &FlowMap, k0: [f64; 3], s_range: [f64; 2], n: usize) -> Result<Polyline> {
    field_line(m, LineKind::Magnetic, k0, s_range, n)
}

/// Trace the same line by integrating `dk/ds = J(k)^-1 f(k)` with classical
/// fourth-order Runge–Kutta, where `f` is `v` or `B` looked up numerically
/// at each stage.
///
/// Analytically the right-hand side is the constant [`LineKind::direction`],
/// so this routine adds no information beyond [`field_line`] — except that it
/// never uses that fact. Agreement between the two is an end-to-end check
/// that the Jacobian and the fields it induces are mutually consistent.
pub fn rk4_trace(
    m: &FlowMap,
    kind: LineKind,
    k0: [f64; 3],
    s_range: [f64; 2],
    n: usize,
) -> Result<Polyline> {
    if n == 0 {
        return Err(Error::BadGrid("field line needs at least one sample".into()));
    }
    let rhs = |k: [f64; 3]| -> Result<Option<[f64; 3]>> {
        if !m.domain().contains(k) {
            return Ok(None);
        }
        let jet = m.jet(k)?;
        let jac = crate::linalg::Mat3::from_columns(jet.first[0], jet.first[1], jet.first[2]);
        let det = jac.det();
        let f = match kind {
            LineKind::Streamline => jet.velocity(),
            LineKind::Magnetic => jet.magnetic(),
        };
        let dk = jac.inverse(det).mul_vec(f);
        Ok(Some([dk[0], dk[1], dk[2]]))
    };

    let s_vals = linspace(s_range[0], s_range[1], n);
    let mut out_s = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut truncated = false;
    let mut k = k0;
    for (i, &s) in s_vals.iter().enumerate() {
        if !m.domain().contains(k) {
            truncated = true;
            break;
        }
        points.push(m.position(k)?);
        out_s.push(s);
        if i + 1 == s_vals.len() {
            break;
        }
        let h = s_vals[i + 1] - s;
        let step = |k: [f64; 3], d: [f64; 3], c: f64| {
            [k[0] + c * h * d[0], k[1] + c * h * d[1], k[2] + c * h * d[2]]
        };
        // Any stage that leaves the domain truncates the trace.
        let Some(d1) = rhs(k)? else {
            truncated = true;
            break;
        };
        let Some(d2) = rhs(step(k, d1, 0.5))? else {
            truncated = true;
            break;
        };
        let Some(d3) = rhs(step(k, d2, 0.5))? else {
            truncated = true;
            break;
        };
        let Some(d4) = rhs(step(k, d3, 1.0))? else {
            truncated = true;
            break;
        };
        for a in 0..3 {
            k[a] += h / 6.0 * (d1[a] + 2.0 * d2[a] + 2.0 * d3[a] + d4[a]);
        }
    }
    Ok(Polyline {
        kind,
        seed: k0,
        s: out_s,
        points,
        truncated,
    })
}

/// Largest deviation between the central-difference tangent of the sampled
/// line and the exact field at the interior sample points.
///
/// For a smooth flow this decays as the square of the sampling step, which
/// makes it a convergence probe for the line extraction as a whole. Lines
/// with fewer than three samples have no interior points and report zero.
pub fn tangency_error(m: &FlowMap, line: &Polyline) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 1..line.len().saturating_sub(1) {
        let ds = line.s[i + 1] - line.s[i - 1];
        let tangent = (line.points[i + 1] - line.points[i - 1]) / ds;
        let state = m.fields(line.label_point(i))?;
        let field = match line.kind {
            LineKind::Streamline => state.velocity,
            LineKind::Magnetic => state.magnetic,
        };
        worst = worst.max((tangent - field).norm());
    }
    Ok(worst)
}

/// A per-vertex scalar attached to a [`SurfaceMesh`].
#[derive(Debug, Clone)]
pub struct VertexScalar {
    /// Short name used as the column/array label in exports.
    pub name: &'static str,
    /// One value per vertex, in vertex order.
    pub values: Vec<f64>,
}

/// Quad tessellation of a constant-k³ coordinate surface.
///
/// Vertices are laid out row-major: the vertex at grid node `(i1, i2)` has
/// index `i1 * res[1] + i2`. A periodic k² direction shows up as a
/// duplicated seam (first and last column coincide) unless welded.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    /// The level `k³ = c` the mesh lives on.
    pub c: f64,
    /// Grid resolution `[n1, n2]` (vertices per axis).
    pub res: [usize; 2],
    /// `(k¹, k²)` of each vertex.
    pub params: Vec<[f64; 2]>,
    /// Position of each vertex.
    pub vertices: Vec<Vec3>,
    /// Quads as four vertex indices each, counter-clockwise in the grid.
    pub faces: Vec<[usize; 4]>,
    /// Per-vertex scalar fields (`a.b`, `|B|`, `p`).
    pub scalars: Vec<VertexScalar>,
    /// Indices of faces whose area element vanishes at some corner.
    pub degenerate_faces: Vec<usize>,
}

impl SurfaceMesh {
    /// Weld the duplicated k² seam: if the last vertex column coincides with
    /// the first to within [`WELD_TOL`], drop it and re-point its faces at
    /// column zero. Returns true when a weld happened; a mesh whose edge
    /// columns differ is left untouched.
    pub fn weld_seam(&mut self) -> bool {
        let [n1, n2] = self.res;
        if n2 < 2 {
            return false;
        }
        for i1 in 0..n1 {
            let first = self.vertices[i1 * n2];
            let last = self.vertices[i1 * n2 + n2 - 1];
            if (first - last).norm() > WELD_TOL {
                return false;
            }
        }
        let keep = n2 - 1;
        let remap = |idx: usize| {
            let (i1, i2) = (idx / n2, idx % n2);
            i1 * keep + if i2 == keep { 0 } else { i2 }
        };
        for face in &mut self.faces {
            for v in face.iter_mut() {
                *v = remap(*v);
            }
        }
        let mut kept_vertices = Vec::with_capacity(n1 * keep);
        let mut kept_params = Vec::with_capacity(n1 * keep);
        for i1 in 0..n1 {
            for i2 in 0..keep {
                kept_vertices.push(self.vertices[i1 * n2 + i2]);
                kept_params.push(self.params[i1 * n2 + i2]);
            }
        }
        self.vertices = kept_vertices;
        self.params = kept_params;
        for scalar in &mut self.scalars {
            let mut kept = Vec::with_capacity(n1 * keep);
            for i1 in 0..n1 {
                for i2 in 0..keep {
                    kept.push(scalar.values[i1 * n2 + i2]);
                }
            }
            scalar.values = kept;
        }
        self.res = [n1, keep];
        true
    }
}

/// Tessellate the surface `k³ = c` over a `(k¹, k²)` window.
///
/// The window and level must lie inside the flow's domain. Each vertex
/// carries the Alfvén discriminant `a.b`, the magnetic pressure proxy `|B|`,
/// and the hydrodynamic pressure `p`; faces with a vanishing area element
/// at a corner are listed in `degenerate_faces`.
pub fn tessellate_surface(
    m: &FlowMap,
    c: f64,
    k1_range: [f64; 2],
    k2_range: [f64; 2],
    res: [usize; 2],
) -> Result<SurfaceMesh> {
    if res[0] < 2 || res[1] < 2 {
        return Err(Error::BadGrid(format!(
            "surface tessellation needs at least 2 vertices per axis, got {}x{}",
            res[0], res[1]
        )));
    }
    let dom = m.domain();
    for &(lo, hi, axis) in &[
        (k1_range[0], k1_range[1], 0usize),
        (k2_range[0], k2_range[1], 1),
        (c, c, 2),
    ] {
        let [alo, ahi] = dom.axis(axis);
        if !(lo >= alo && hi <= ahi && lo <= hi) {
            return Err(Error::OutsideDomain {
                point: [k1_range[0], k2_range[0], c],
            });
        }
    }

    let k1s = linspace(k1_range[0], k1_range[1], res[0]);
    let k2s = linspace(k2_range[0], k2_range[1], res[1]);
    let n_verts = res[0] * res[1];
    let mut params = Vec::with_capacity(n_verts);
    let mut vertices = Vec::with_capacity(n_verts);
    let mut disc = Vec::with_capacity(n_verts);
    let mut bmag = Vec::with_capacity(n_verts);
    let mut pressure = Vec::with_capacity(n_verts);
    let mut area = Vec::with_capacity(n_verts);
    for &k1 in &k1s {
        for &k2 in &k2s {
            let jet = m.jet([k1, k2, c])?;
            params.push([k1, k2]);
            vertices.push(jet.x);
            disc.push(jet.alfven_discriminant());
            let b = jet.magnetic();
            bmag.push(b.norm());
            pressure.push(m.total_pressure() - 0.5 * b.norm_sq());
            area.push(jet.first[0].cross(jet.first[1]).norm());
        }
    }

    let mut faces = Vec::with_capacity((res[0] - 1) * (res[1] - 1));
    let mut degenerate_faces = Vec::new();
    for i1 in 0..res[0] - 1 {
        for i2 in 0..res[1] - 1 {
            let v00 = i1 * res[1] + i2;
            let v10 = (i1 + 1) * res[1] + i2;
            let corners = [v00, v10, v10 + 1, v00 + 1];
            if corners.iter().any(|&v| area[v] < DEGENERATE_AREA) {
                degenerate_faces.push(faces.len());
            }
            faces.push(corners);
        }
    }

    Ok(SurfaceMesh {
        c,
        res,
        params,
        vertices,
        faces,
        scalars: vec![
            VertexScalar {
                name: "a.b",
                values: disc,
            },
            VertexScalar {
                name: "B_mag",
                values: bmag,
            },
            VertexScalar {
                name: "p",
                values: pressure,
            },
        ],
        degenerate_faces,
    })
}

/// One classified grid point: labels, discriminant value, regime.
#[derive(Debug, Clone, Copy)]
pub struct RegimeSample {
    /// Label-space point.
    pub k: [f64; 3],
    /// Alfvén discriminant `a.b` there.
    pub discriminant: f64,
    /// Regime implied by the discriminant's sign.
    pub regime: MachRegime,
}

/// Classify every node of a grid over the flow's domain by its Alfvén
/// discriminant. Points run in row-major k¹-outermost order.
pub fn classify_grid(m: &FlowMap, grid: &GridSpec) -> Result<Vec<RegimeSample>> {
    let axes = grid.axes(m.domain())?;
    let mut out = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let d = m.alfven_discriminant([k1, k2, k3])?;
                out.push(RegimeSample {
                    k: [k1, k2, k3],
                    discriminant: d,
                    regime: MachRegime::classify(d),
                });
            }
        }
    }
    Ok(out)
}

/// One sampled plasma state on a grid node.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    /// Label-space point.
    pub k: [f64; 3],
    /// Position.
    pub x: Vec3,
    /// Velocity.
    pub v: Vec3,
    /// Magnetic field.
    pub b: Vec3,
    /// Hydrodynamic pressure.
    pub p: f64,
}

/// Sample position, velocity, magnetic field, and pressure on every node of
/// a grid over the flow's domain, in row-major k¹-outermost order.
pub fn sample_fields(m: &FlowMap, grid: &GridSpec) -> Result<Vec<FieldSample>> {
    let axes = grid.axes(m.domain())?;
    let mut out = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let state = m.fields([k1, k2, k3])?;
                out.push(FieldSample {
                    k: [k1, k2, k3],
                    x: state.position,
                    v: state.velocity,
                    b: state.magnetic,
                    p: state.pressure,
                });
            }
        }
    }
    Ok(out)
}

/// Output encodings understood by the exporters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Wavefront OBJ (`v`/`f`/`l` records).
    Obj,
    /// Legacy ASCII VTK polydata.
    VtkLegacy,
    /// Comma-separated values with a header row.
    Csv,
}

impl ExportFormat {
    /// Lowercase name as accepted on a command line.
    pub fn label(self) -> &'static str {
        match self {
            ExportFormat::Obj => "obj",
            ExportFormat::VtkLegacy => "vtk",
            ExportFormat::Csv => "csv",
        }
    }
}

const VTK_HEADER: &str = "# vtk DataFile Version 3.0\n";

fn vtk_preamble(title: &str, n_points: usize, points: impl Iterator<Item = Vec3>) -> String {
    let mut out = String::new();
    out.push_str(VTK_HEADER);
    out.push_str(title);
    out.push_str("\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(out, "POINTS {n_points} double");
    for p in points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}

fn vtk_point_scalars(out: &mut String, scalars: &[VertexScalar]) {
    for s in scalars {
        let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", s.name);
        for v in &s.values {
            let _ = writeln!(out, "{v}");
        }
    }
}

/// Serialize a surface mesh.
///
/// OBJ writes vertices and quad faces; VTK adds the per-vertex scalars as
/// point data; CSV writes one vertex per row with its parameters, position,
/// and scalars (faces are implied by the stored grid layout).
pub fn export_mesh(mesh: &SurfaceMesh, format: ExportFormat, path: &Path) -> Result<()> {
    if mesh.vertices.is_empty() {
        return Err(Error::EmptyExport("mesh"));
    }
    let body = match format {
        ExportFormat::Obj => {
            let mut out = String::new();
            for v in &mesh.vertices {
                let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
            }
            for f in &mesh.faces {
                // OBJ indices are 1-based.
                let _ = writeln!(out, "f {} {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1);
            }
            out
        }
        ExportFormat::VtkLegacy => {
            let mut out = vtk_preamble(
                "constant-k3 surface",
                mesh.vertices.len(),
                mesh.vertices.iter().copied(),
            );
            let _ = writeln!(out, "POLYGONS {} {}", mesh.faces.len(), mesh.faces.len() * 5);
            for f in &mesh.faces {
                let _ = writeln!(out, "4 {} {} {} {}", f[0], f[1], f[2], f[3]);
            }
            let _ = writeln!(out, "POINT_DATA {}", mesh.vertices.len());
            vtk_point_scalars(&mut out, &mesh.scalars);
            out
        }
        ExportFormat::Csv => {
            let mut out = String::from("k1,k2,x,y,z");
            for s in &mesh.scalars {
                out.push(',');
                out.push_str(s.name);
            }
            out.push('\n');
            for (i, v) in mesh.vertices.iter().enumerate() {
                let _ = write!(
                    out,
                    "{},{},{},{},{}",
                    mesh.params[i][0], mesh.params[i][1], v[0], v[1], v[2]
                );
                for s in &mesh.scalars {
                    let _ = write!(out, ",{}", s.values[i]);
                }
                out.push('\n');
            }
            out
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}

/// Serialize a field line.
///
/// OBJ writes vertices and a single `l` record; VTK writes a polyline with
/// the parameter `s` as point data; CSV writes `s` and the position per row.
pub fn export_polyline(line: &Polyline, format: ExportFormat, path: &Path) -> Result<()> {
    if line.points.is_empty() {
        return Err(Error::EmptyExport("polyline"));
    }
    let body = match format {
        ExportFormat::Obj => {
            let mut out = String::new();
            for p in &line.points {
                let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
            }
            out.push('l');
            for i in 1..=line.points.len() {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
            out
        }
        ExportFormat::VtkLegacy => {
            let mut out = vtk_preamble(line.kind.label(), line.points.len(), line.points.iter().copied());
            let _ = writeln!(out, "LINES 1 {}", line.points.len() + 1);
            let _ = write!(out, "{}", line.points.len());
            for i in 0..line.points.len() {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
            let _ = writeln!(out, "POINT_DATA {}", line.points.len());
            let _ = writeln!(out, "SCALARS s double 1\nLOOKUP_TABLE default");
            for s in &line.s {
                let _ = writeln!(out, "{s}");
            }
            out
        }
        ExportFormat::Csv => {
            let mut out = String::from("s,x,y,z\n");
            for (s, p) in line.s.iter().zip(&line.points) {
                let _ = writeln!(out, "{},{},{},{}", s, p[0], p[1], p[2]);
            }
            out
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}

/// Serialize a classification grid as CSV (`k1,k2,k3,discriminant,label`).
/// Only CSV can carry the labels, so other formats are rejected.
pub fn export_classification(
    samples: &[RegimeSample],
    format: ExportFormat,
    path: &Path,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyExport("classification grid"));
    }
    if format != ExportFormat::Csv {
        return Err(Error::UnsupportedFormat {
            what: "classification grid",
            format: format.label(),
        });
    }
    let mut out = String::from("k1,k2,k3,discriminant,label\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.k[0],
            s.k[1],
            s.k[2],
            s.discriminant,
            s.regime.label()
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Serialize sampled fields.
///
/// CSV writes one row per node (`k1,k2,k3,x,y,z,vx,vy,vz,bx,by,bz,p`);
/// VTK writes a point cloud with `v` and `B` as vectors and `p` as a scalar.
pub fn export_fields(samples: &[FieldSample], format: ExportFormat, path: &Path) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyExport("field samples"));
    }
    let body = match format {
        ExportFormat::Csv => {
            let mut out = String::from("k1,k2,k3,x,y,z,vx,vy,vz,bx,by,bz,p\n");
            for s in samples {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    s.k[0],
                    s.k[1],
                    s.k[2],
                    s.x[0],
                    s.x[1],
                    s.x[2],
                    s.v[0],
                    s.v[1],
                    s.v[2],
                    s.b[0],
                    s.b[1],
                    s.b[2],
                    s.p
                );
            }
            out
        }
        ExportFormat::VtkLegacy => {
            let mut out = vtk_preamble(
                "sampled plasma state",
                samples.len(),
                samples.iter().map(|s| s.x),
            );
            let _ = writeln!(out, "VERTICES {} {}", samples.len(), samples.len() * 2);
            for i in 0..samples.len() {
                let _ = writeln!(out, "1 {i}");
            }
            let _ = writeln!(out, "POINT_DATA {}", samples.len());
            let _ = writeln!(out, "VECTORS v double");
            for s in samples {
                let _ = writeln!(out, "{} {} {}", s.v[0], s.v[1], s.v[2]);
            }
            let _ = writeln!(out, "VECTORS B double");
            for s in samples {
                let _ = writeln!(out, "{} {} {}", s.b[0], s.b[1], s.b[2]);
            }
            let _ = writeln!(out, "SCALARS p double 1\nLOOKUP_TABLE default");
            for s in samples {
                let _ = writeln!(out, "{}", s.p);
            }
            out
        }
        ExportFormat::Obj => {
            return Err(Error::UnsupportedFormat {
                what: "field samples",
                format: format.label(),
            })
        }
    };
    std::fs::write(path, body)?;
    Ok(())
}

/// Serialize current-sheet samples as CSV
/// (`k1,k2,x,y,z,nx,ny,nz,jx,jy,jz`). Other formats are rejected.
pub fn export_sheet(
    samples: &[crate::transforms::SheetSample],
    format: ExportFormat,
    path: &Path,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyExport("current sheet"));
    }
    if format != ExportFormat::Csv {
        return Err(Error::UnsupportedFormat {
            what: "current sheet",
            format: format.label(),
        });
    }
    let mut out = String::from("k1,k2,x,y,z,nx,ny,nz,jx,jy,jz\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.k1,
            s.k2,
            s.x[0],
            s.x[1],
            s.x[2],
            s.n[0],
            s.n[1],
            s.n[2],
            s.j[0],
            s.j[1],
            s.j[2]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::areamap::{AreaMap, Box2};
    use crate::expr::Expr;
    use crate::families;
    use crate::flowmap::{Box3, FlowJet, FlowKernel};

    const TIGHT: f64 = 1e-12;

    fn identity_flow() -> FlowMap {
        let map = AreaMap::from_pair(
            Expr::parse("k2").unwrap(),
            Expr::parse("k3").unwrap(),
            Box2::new([0.0, 1.0], [0.0, 1.0]),
        )
        .unwrap();
        families::build_s1(
            Expr::parse("0").unwrap(),
            map,
            Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            0.75,
        )
        .unwrap()
    }

    fn cylinder_flow() -> FlowMap {
        let map = AreaMap::circular(Box2::new([0.0, 7.0], [0.2, 1.5])).unwrap();
        families::build_s1(
            Expr::parse("0").unwrap(),
            map,
            Box3::new([0.0, 7.0], [0.0, 7.0], [0.2, 1.5]),
            1.0,
        )
        .unwrap()
    }

    fn sheared_tube_flow() -> FlowMap {
        let map = AreaMap::circular(Box2::new([0.0, 7.0], [0.2, 1.5])).unwrap();
        families::build_s2(
            Expr::parse("sin(k1)").unwrap(),
            Expr::parse("cos(2*t3)").unwrap(),
            map,
            Box3::new([0.0, 7.0], [0.0, 7.0], [0.2, 1.5]),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_streamline_is_a_straight_segment() {
        let m = identity_flow();
        let line = streamline(&m, [0.0, 0.0, 0.0], [0.0, 2.0], 21).unwrap();
        assert!(!line.truncated);
        assert_eq!(line.len(), 21);
        for (s, p) in line.s.iter().zip(&line.points) {
            // x = k = seed + s * (1/2, 1/2, 0), exactly.
            assert_eq!(p.0, [0.5 * s, 0.5 * s, 0.0]);
        }
    }

    #[test]
    fn identity_magnetic_line_follows_b() {
        let m = identity_flow();
        let line = magnetic_line(&m, [0.5, 0.0, 0.5], [0.0, 1.0], 11).unwrap();
        assert!(!line.truncated);
        for (s, p) in line.s.iter().zip(&line.points) {
            assert_eq!(p.0, [0.5 - 0.5 * s, 0.5 * s, 0.5]);
        }
    }

    #[test]
    fn lines_truncate_at_the_domain_wall() {
        let m = identity_flow();
        // Exits at s = 1 where k1 = k2 = 1; s > 1 must be dropped.
        let line = streamline(&m, [0.5, 0.5, 0.5], [0.0, 4.0], 41).unwrap();
        assert!(line.truncated);
        assert!(!line.is_empty());
        let dom = m.domain();
        for i in 0..line.len() {
            assert!(dom.contains(line.label_point(i)));
        }
        assert!(line.s.last().unwrap() <= &1.0);

        // A seed already outside yields an empty, truncated line.
        let empty = streamline(&m, [2.0, 0.0, 0.0], [0.0, 1.0], 5).unwrap();
        assert!(empty.truncated);
        assert!(empty.is_empty());
    }

    #[test]
    fn cylinder_streamline_stays_on_its_flux_tube() {
        let m = cylinder_flow();
        let k0 = [0.0, 0.0, 0.5];
        let line = streamline(&m, k0, [0.0, 4.0], 33).unwrap();
        assert!(!line.truncated);
        let radius = (2.0f64 * k0[2]).sqrt();
        for p in &line.points {
            let r = (p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - radius).abs() < TIGHT, "r = {r}");
        }
    }

    #[test]
    fn central_difference_tangent_converges_quadratically() {
        let m = sheared_tube_flow();
        let k0 = [1.0, 1.0, 0.8];
        let coarse = streamline(&m, k0, [0.0, 2.0], 41).unwrap();
        let fine = streamline(&m, k0, [0.0, 2.0], 81).unwrap();
        assert!(!coarse.truncated && !fine.truncated);
        let e_coarse = tangency_error(&m, &coarse).unwrap();
        let e_fine = tangency_error(&m, &fine).unwrap();
        let ds_coarse = coarse.s[1] - coarse.s[0];
        let ds_fine = fine.s[1] - fine.s[0];
        let c_coarse = e_coarse / (ds_coarse * ds_coarse);
        let c_fine = e_fine / (ds_fine * ds_fine);
        assert!(e_coarse > 0.0 && e_fine > 0.0);
        // Second-order decay: the implied constant is step-independent.
        let ratio = c_coarse / c_fine;
        assert!(ratio > 0.25 && ratio < 4.0, "C ratio {ratio}");
        // And the same bound holds for magnetic lines.
        let mag = magnetic_line(&m, [3.0, 1.0, 0.8], [0.0, 2.0], 81).unwrap();
        let e_mag = tangency_error(&m, &mag).unwrap();
        assert!(e_mag < c_fine.max(c_coarse) * 4.0 * ds_fine * ds_fine);
    }

    #[test]
    fn rk4_trace_matches_the_parametric_line() {
        let m = sheared_tube_flow();
        let k0 = [1.0, 1.0, 0.8];
        let exact = streamline(&m, k0, [0.0, 2.0], 21).unwrap();
        let traced = rk4_trace(&m, LineKind::Streamline, k0, [0.0, 2.0], 21).unwrap();
        assert_eq!(exact.len(), traced.len());
        for (a, b) in exact.points.iter().zip(&traced.points) {
            // The integrand is constant, so the only error is float noise.
            assert!((*a - *b).norm() < 1e-10);
        }
        let mag_exact = magnetic_line(&m, k0, [0.0, 1.5], 16).unwrap();
        let mag_traced = rk4_trace(&m, LineKind::Magnetic, k0, [0.0, 1.5], 16).unwrap();
        for (a, b) in mag_exact.points.iter().zip(&mag_traced.points) {
            assert!((*a - *b).norm() < 1e-10);
        }
    }

    #[test]
    fn identity_surface_is_a_flat_grid() {
        let m = identity_flow();
        let mesh = tessellate_surface(&m, 0.5, [0.0, 1.0], [0.0, 1.0], [3, 4]).unwrap();
        assert_eq!(mesh.vertices.len(), 12);
        assert_eq!(mesh.faces.len(), 2 * 3);
        assert!(mesh.degenerate_faces.is_empty());
        for (i, v) in mesh.vertices.iter().enumerate() {
            assert_eq!(v.0, [mesh.params[i][0], mesh.params[i][1], 0.5]);
        }
        let p = mesh.scalars.iter().find(|s| s.name == "p").unwrap();
        // v = (1/2,1/2,0), B = (-1/2,1/2,0): p = P0 - |B|^2/2 = 0.75 - 0.25.
        for &v in &p.values {
            assert_eq!(v, 0.5);
        }
        for f in &mesh.faces {
            assert!(f.iter().all(|&v| v < mesh.vertices.len()));
        }
    }

    #[test]
    fn cylinder_surface_has_unit_radius_and_welds() {
        let m = cylinder_flow();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut mesh = tessellate_surface(&m, 0.5, [0.0, 2.0], [0.0, two_pi], [32, 32]).unwrap();
        assert_eq!(mesh.vertices.len(), 1024);
        assert_eq!(mesh.faces.len(), 31 * 31);
        for v in &mesh.vertices {
            let r = (v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 1.0).abs() < TIGHT);
        }
        // k2 = 0 and k2 = 2pi map to the same circle: the seam welds.
        assert!(mesh.weld_seam());
        assert_eq!(mesh.res, [32, 31]);
        assert_eq!(mesh.vertices.len(), 32 * 31);
        assert_eq!(mesh.faces.len(), 31 * 31);
        for f in &mesh.faces {
            assert!(f.iter().all(|&v| v < mesh.vertices.len()));
        }
        for s in &mesh.scalars {
            assert_eq!(s.values.len(), mesh.vertices.len());
        }
        // An open patch must refuse to weld.
        let mut open = tessellate_surface(&m, 0.5, [0.0, 2.0], [0.0, 3.0], [4, 4]).unwrap();
        assert!(!open.weld_seam());
        assert_eq!(open.vertices.len(), 16);
    }

    #[test]
    fn surface_window_must_sit_inside_the_domain() {
        let m = identity_flow();
        let err = tessellate_surface(&m, 1.5, [0.0, 1.0], [0.0, 1.0], [3, 3]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
        let err = tessellate_surface(&m, 0.5, [0.0, 2.0], [0.0, 1.0], [3, 3]).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { .. }));
        let err = tessellate_surface(&m, 0.5, [0.0, 1.0], [0.0, 1.0], [1, 3]).unwrap_err();
        assert!(matches!(err, Error::BadGrid(_)));
    }

    #[test]
    fn degenerate_faces_are_flagged() {
        // Valid flow maps have |x_1 x x_2| >= 1/|x_3| > 0 (their volume
        // element is one), so a degenerate surface cell can only come from a
        // raw kernel.  x = (k1, k2 * k3, k3) pinches to a line at k3 = 0.
        struct Pinched;
        impl FlowKernel for Pinched {
            fn jet(&self, k: [f64; 3]) -> crate::error::Result<FlowJet> {
                let mut jet = FlowJet {
                    x: Vec3::new(k[0], k[1] * k[2], k[2]),
                    ..FlowJet::default()
                };
                jet.first[0] = Vec3::new(1.0, 0.0, 0.0);
                jet.first[1] = Vec3::new(0.0, k[2], 0.0);
                jet.first[2] = Vec3::new(0.0, k[1], 1.0);
                jet.second[1][2] = Vec3::new(0.0, 1.0, 0.0);
                jet.second[2][1] = jet.second[1][2];
                Ok(jet)
            }
        }
        let m = FlowMap::new(
            std::sync::Arc::new(Pinched),
            Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            1.0,
            "pinched",
        );
        let flat = tessellate_surface(&m, 0.0, [0.0, 1.0], [0.0, 1.0], [3, 3]).unwrap();
        // Every corner at k3 = 0 has x_2 = 0: all four faces are degenerate.
        assert_eq!(flat.degenerate_faces, vec![0, 1, 2, 3]);
        let healthy = tessellate_surface(&m, 1.0, [0.0, 1.0], [0.0, 1.0], [3, 3]).unwrap();
        assert!(healthy.degenerate_faces.is_empty());
    }

    #[test]
    fn classification_covers_all_three_regimes() {
        // For the planar family the discriminant is the k2-derivative of the
        // drift t1, so t1 in {k2, -k2, 0} pins the three regimes exactly.
        let flow_with_drift = |t1: &str| {
            let map = AreaMap::from_pair(
                Expr::parse("k2").unwrap(),
                Expr::parse("k3").unwrap(),
                Box2::new([-1.0, 1.0], [0.0, 1.0]),
            )
            .unwrap();
            families::build_s1(
                Expr::parse(t1).unwrap(),
                map,
                Box3::new([0.0, 1.0], [-1.0, 1.0], [0.0, 1.0]),
                1.0,
            )
            .unwrap()
        };
        let grid = GridSpec { res: [2, 5, 2] };
        for (t1, want, value) in [
            ("k2", MachRegime::SuperAlfvenic, 1.0),
            ("-k2", MachRegime::SubAlfvenic, -1.0),
            ("0", MachRegime::Alfvenic, 0.0),
        ] {
            let samples = classify_grid(&flow_with_drift(t1), &grid).unwrap();
            assert_eq!(samples.len(), 20);
            for s in &samples {
                assert_eq!(s.regime, want, "t1 = {t1}");
                assert_eq!(s.discriminant, value);
            }
        }
    }

    #[test]
    fn exports_write_expected_structure() {
        let m = cylinder_flow();
        let dir = tempfile::tempdir().unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mesh = tessellate_surface(&m, 0.5, [0.0, 2.0], [0.0, two_pi], [4, 4]).unwrap();

        let obj_path = dir.path().join("mesh.obj");
        export_mesh(&mesh, ExportFormat::Obj, &obj_path).unwrap();
        let obj = std::fs::read_to_string(&obj_path).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 16);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 9);
        assert!(obj.lines().all(|l| l.starts_with("v ") || l.starts_with("f ")));

        let vtk_path = dir.path().join("mesh.vtk");
        export_mesh(&mesh, ExportFormat::VtkLegacy, &vtk_path).unwrap();
        let vtk = std::fs::read_to_string(&vtk_path).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(vtk.contains("DATASET POLYDATA"));
        assert!(vtk.contains("POINTS 16 double"));
        assert!(vtk.contains("POLYGONS 9 45"));
        assert!(vtk.contains("POINT_DATA 16"));
        assert!(vtk.contains("SCALARS a.b double 1"));
        assert!(vtk.contains("SCALARS p double 1"));

        let csv_path = dir.path().join("mesh.csv");
        export_mesh(&mesh, ExportFormat::Csv, &csv_path).unwrap();
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k1,k2,x,y,z,a.b,B_mag,p");
        assert_eq!(lines.count(), 16);

        let line = streamline(&m, [0.0, 0.0, 0.5], [0.0, 2.0], 5).unwrap();
        let line_obj = dir.path().join("line.obj");
        export_polyline(&line, ExportFormat::Obj, &line_obj).unwrap();
        let text = std::fs::read_to_string(&line_obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 5);
        assert_eq!(text.lines().filter(|l| l.starts_with('l')).count(), 1);
        assert!(text.contains("l 1 2 3 4 5"));

        let line_vtk = dir.path().join("line.vtk");
        export_polyline(&line, ExportFormat::VtkLegacy, &line_vtk).unwrap();
        let text = std::fs::read_to_string(&line_vtk).unwrap();
        assert!(text.contains("LINES 1 6"));
        assert!(text.contains("SCALARS s double 1"));

        let line_csv = dir.path().join("line.csv");
        export_polyline(&line, ExportFormat::Csv, &line_csv).unwrap();
        let text = std::fs::read_to_string(&line_csv).unwrap();
        assert!(text.starts_with("s,x,y,z\n"));
        assert_eq!(text.lines().count(), 6);

        let samples = classify_grid(&m, &GridSpec { res: [2, 2, 2] }).unwrap();
        let cls_csv = dir.path().join("cls.csv");
        export_classification(&samples, ExportFormat::Csv, &cls_csv).unwrap();
        let text = std::fs::read_to_string(&cls_csv).unwrap();
        assert!(text.starts_with("k1,k2,k3,discriminant,label\n"));
        assert_eq!(text.lines().count(), 9);
        assert!(text.contains("alfvenic"));

        let fields = sample_fields(&m, &GridSpec { res: [2, 2, 2] }).unwrap();
        let f_csv = dir.path().join("fields.csv");
        export_fields(&fields, ExportFormat::Csv, &f_csv).unwrap();
        let text = std::fs::read_to_string(&f_csv).unwrap();
        assert!(text.starts_with("k1,k2,k3,x,y,z,vx,vy,vz,bx,by,bz,p\n"));
        assert_eq!(text.lines().count(), 9);

        let f_vtk = dir.path().join("fields.vtk");
        export_fields(&fields, ExportFormat::VtkLegacy, &f_vtk).unwrap();
        let text = std::fs::read_to_string(&f_vtk).unwrap();
        assert!(text.contains("VECTORS v double"));
        assert!(text.contains("VECTORS B double"));
        assert!(text.contains("VERTICES 8 16"));
    }

    #[test]
    fn empty_and_unsupported_exports_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = Polyline {
            kind: LineKind::Streamline,
            seed: [0.0; 3],
            s: vec![],
            points: vec![],
            truncated: true,
        };
        let err = export_polyline(&empty, ExportFormat::Csv, &dir.path().join("e.csv")).unwrap_err();
        assert!(matches!(err, Error::EmptyExport("polyline")));

        let err = export_classification(&[], ExportFormat::Csv, &dir.path().join("c.csv")).unwrap_err();
        assert!(matches!(err, Error::EmptyExport(_)));

        let m = identity_flow();
        let samples = classify_grid(&m, &GridSpec { res: [2, 2, 2] }).unwrap();
        let err =
            export_classification(&samples, ExportFormat::Obj, &dir.path().join("c.obj")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));

        let fields = sample_fields(&m, &GridSpec { res: [2, 2, 2] }).unwrap();
        let err = export_fields(&fields, ExportFormat::Obj, &dir.path().join("f.obj")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));
    }

    #[test]
    fn sheet_export_writes_eleven_columns() {
        use crate::transforms::{current_sheet, CurrentSheetSpec};
        let m = cylinder_flow();
        let spec = CurrentSheetSpec {
            c: 0.5,
            phi_minus: 1.0,
            phi_plus: 2.0,
            res: [4, 4],
        };
        let samples = current_sheet(&m, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sheet.csv");
        export_sheet(&samples, ExportFormat::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k1,k2,x,y,z,nx,ny,nz,jx,jy,jz");
        for row in lines {
            assert_eq!(row.split(',').count(), 11);
        }
        let err = export_sheet(&samples, ExportFormat::Obj, &dir.path().join("s.obj")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));
    }
}
