//! Numerical certification of flow maps.
//!
//! Three independent checks, each producing a [`ResidualReport`]:
//!
//! - [`verify_reduced`]: residuals of the curvilinear system the
//!   constructions are designed around — the three contractions
//!   x_i . x_12 + P_i (P constant, so P_i = 0) and the volume condition
//!   det(dx/dk) - 1.  All derivatives analytic.
//! - [`verify_physical`]: an oracle that never touches the reduced
//!   system.  It reconstructs spatial derivatives through the Jacobian
//!   (grad_x = J^-T grad_k) and evaluates the full stationary equations:
//!   momentum (v . grad) v - (B . grad) B + grad P, induction
//!   (B . grad) v - (v . grad) B, and both divergences.  Points where
//!   |det J| <= 1e-8 are skipped and counted, not failed.
//! - [`fd_crosscheck`]: validates every analytic partial against central
//!   finite differences of step h — first partials against differences of
//!   positions, second partials against differences of analytic first
//!   partials, so truncation stays O(h^2) instead of drowning in the
//!   h^-2 rounding amplification a double difference would suffer.
//!
//! Reports are deterministic: a fixed scene and grid yield byte-identical
//! JSON.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flowmap::{Box3, FlowJet, FlowMap};
use crate::linalg::{linspace, Mat3, Vec3};

/// verify_physical skips grid points with |det J| at or below this.
pub const SINGULAR_DET: f64 = 1e-8;
/// Default residual tolerance for analytic-derivative checks.
pub const ANALYTIC_TOL: f64 = 1e-8;
/// Default deviation tolerance for finite-difference cross-checks.
pub const FD_TOL: f64 = 1e-5;

/// Uniform sampling resolution over the flow's domain box.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    pub res: [usize; 3],
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { res: [21, 21, 21] }
    }
}

impl GridSpec {
    pub fn cubic(n: usize) -> Self {
        GridSpec { res: [n, n, n] }
    }

    /// Uniform inclusive sample coordinates along each axis of the box.
    pub(crate) fn axes(&self, b: &Box3) -> Result<[Vec<f64>; 3]> {
        if self.res.contains(&0) {
            return Err(Error::BadGrid(format!(
                "resolution {:?} has a zero axis",
                self.res
            )));
        }
        Ok([0, 1, 2].map(|i| {
            let [lo, hi] = b.axis(i);
            linspace(lo, hi, self.res[i])
        }))
    }

    /// Axes shrunk by `margin` on both ends, so finite-difference stencils
    /// of that reach stay inside the box.
    fn inset_axes(&self, b: &Box3, margin: f64) -> Result<[Vec<f64>; 3]> {
        if self.res.contains(&0) {
            return Err(Error::BadGrid(format!(
                "resolution {:?} has a zero axis",
                self.res
            )));
        }
        let mut out: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let [lo, hi] = b.axis(i);
            if hi - lo <= 2.0 * margin {
                return Err(Error::BadGrid(format!(
                    "axis {} spans [{lo}, {hi}], too thin for a margin of {margin}",
                    i + 1
                )));
            }
            out[i] = linspace(lo + margin, hi - margin, self.res[i]);
        }
        Ok(out)
    }
}

/// Extremes of one residual over the grid.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualEntry {
    pub name: String,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Grid point where |residual| peaks.
    pub argmax: [f64; 3],
}

/// Outcome of one verification pass.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// Which check ran: "reduced", "physical", or "fd-crosscheck".
    pub check: String,
    /// Label of the flow map examined.
    pub flow: String,
    pub grid: [usize; 3],
    pub tol: f64,
    pub entries: Vec<ResidualEntry>,
    /// Smallest gas pressure seen on the grid.
    pub min_pressure: f64,
    /// Points skipped for a near-singular Jacobian.
    pub n_skipped: usize,
    pub pass: bool,
}

impl ResidualReport {
    /// Largest residual across all entries.
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_abs).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

impl std::fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} check of '{}' on a {}x{}x{} grid (tol {:e})",
            self.check, self.flow, self.grid[0], self.grid[1], self.grid[2], self.tol
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:<12} max {:.3e}  mean {:.3e}  at ({:.4}, {:.4}, {:.4})",
                e.name, e.max_abs, e.mean_abs, e.argmax[0], e.argmax[1], e.argmax[2]
            )?;
        }
        if self.n_skipped > 0 {
            writeln!(f, "  {} near-singular points skipped", self.n_skipped)?;
        }
        writeln!(f, "  min pressure {:.6}", self.min_pressure)?;
        write!(f, "  verdict: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Running (max, mean, argmax) accumulator per residual.
struct Tally {
    name: &'static str,
    max_abs: f64,
    sum_abs: f64,
    count: usize,
    argmax: [f64; 3],
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            max_abs: 0.0,
            sum_abs: 0.0,
            count: 0,
            argmax: [f64::NAN; 3],
        }
    }

    fn push(&mut self, value: f64, at: [f64; 3]) {
        let a = value.abs();
        if self.count == 0 || a > self.max_abs {
            self.max_abs = a;
            self.argmax = at;
        }
        self.sum_abs += a;
        self.count += 1;
    }

    fn entry(self) -> ResidualEntry {
        ResidualEntry {
            name: self.name.into(),
            max_abs: self.max_abs,
            mean_abs: if self.count == 0 {
                0.0
            } else {
                self.sum_abs / self.count as f64
            },
            argmax: self.argmax,
        }
    }
}

fn finish_report(
    check: &str,
    m: &FlowMap,
    grid: &GridSpec,
    tol: f64,
    tallies: Vec<Tally>,
    min_pressure: f64,
    n_skipped: usize,
) -> ResidualReport {
    let entries: Vec<ResidualEntry> = tallies.into_iter().map(Tally::entry).collect();
    let pass = entries.iter().all(|e| e.max_abs <= tol);
    ResidualReport {
        check: check.into(),
        flow: m.label().into(),
        grid: grid.res,
        tol,
        entries,
        min_pressure,
        n_skipped,
        pass,
    }
}

/// Residuals of the curvilinear system at one point: the three
/// contractions x_i . x_12 (total pressure constant, so its gradient
/// contributes nothing) and det(dx/dk) - 1.
pub fn reduced_point_residuals(m: &FlowMap, k: [f64; 3]) -> Result<[f64; 4]> {
    let jet = m.jet(k)?;
    let x12 = jet.x12();
    Ok([
        jet.first[0].dot(x12),
        jet.first[1].dot(x12),
        jet.first[2].dot(x12),
        jet.det() - 1.0,
    ])
}

/// Per-point reduced residuals over a grid, in row-major k1-outermost
/// order — the raw data behind [`verify_reduced`], for CSV dumps.
pub fn reduced_residual_table(
    m: &FlowMap,
    grid: &GridSpec,
) -> Result<Vec<([f64; 3], [f64; 4])>> {
    let axes = grid.axes(m.domain())?;
    let mut out = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let k = [k1, k2, k3];
                out.push((k, reduced_point_residuals(m, k)?));
            }
        }
    }
    Ok(out)
}

/// Residuals of the full stationary system at one point, or `None` when
/// the Jacobian is too close to singular to invert trustworthily.
/// Returns (momentum, induction, div v, div B, pressure).
#[allow(clippy::type_complexity)]
pub fn physical_point_residuals(
    m: &FlowMap,
    k: [f64; 3],
) -> Result<Option<(Vec3, Vec3, f64, f64, f64)>> {
    let jet = m.jet(k)?;
    let jac = Mat3::from_columns(jet.first[0], jet.first[1], jet.first[2]);
    let det = jac.det();
    if det.abs() <= SINGULAR_DET {
        return Ok(None);
    }
    let inv = jac.inverse(det);
    // dv/dk and dB/dk column-wise from the second partials
    let half = |p: Vec3, q: Vec3| (p + q) * 0.5;
    let dv_dk = Mat3::from_columns(
        half(jet.second[0][0], jet.second[1][0]),
        half(jet.second[0][1], jet.second[1][1]),
        half(jet.second[0][2], jet.second[1][2]),
    );
    let db_dk = Mat3::from_columns(
        half(jet.second[1][0], -jet.second[0][0]),
        half(jet.second[1][1], -jet.second[0][1]),
        half(jet.second[1][2], -jet.second[0][2]),
    );
    // spatial derivative matrices: d(f)/dx = d(f)/dk . dk/dx
    let dv = dv_dk.mul_mat(&inv);
    let db = db_dk.mul_mat(&inv);
    let v = jet.velocity();
    let b = jet.magnetic();
    // total pressure is a constant, so its spatial gradient is zero;
    // J^-T grad_k P is spelled out to keep the oracle honest
    let grad_p = inv.transpose().mul_vec(Vec3::default());
    let momentum = dv.mul_vec(v) - db.mul_vec(b) + grad_p;
    let induction = dv.mul_vec(b) - db.mul_vec(v);
    let pressure = m.total_pressure() - 0.5 * b.norm_sq();
    Ok(Some((momentum, induction, dv.trace(), db.trace(), pressure)))
}

/// Check the reduced curvilinear system over a uniform grid.
pub fn verify_reduced(m: &FlowMap, grid: &GridSpec, tol: f64) -> Result<ResidualReport> {
    let axes = grid.axes(m.domain())?;
    let mut tallies = vec![
        Tally::new("x1.x12+P1"),
        Tally::new("x2.x12+P2"),
        Tally::new("x3.x12+P3"),
        Tally::new("det(J)-1"),
    ];
    let mut min_pressure = f64::INFINITY;
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let k = [k1, k2, k3];
                let r = reduced_point_residuals(m, k)?;
                for (t, v) in tallies.iter_mut().zip(r) {
                    t.push(v, k);
                }
                let b = m.jet(k)?.magnetic();
                min_pressure = min_pressure.min(m.total_pressure() - 0.5 * b.norm_sq());
            }
        }
    }
    Ok(finish_report("reduced", m, grid, tol, tallies, min_pressure, 0))
}

/// Check the full stationary equations over a uniform grid, via
/// chain-rule reconstruction of spatial derivatives.
pub fn verify_physical(m: &FlowMap, grid: &GridSpec, tol: f64) -> Result<ResidualReport> {
    let axes = grid.axes(m.domain())?;
    let mut tallies = vec![
        Tally::new("momentum"),
        Tally::new("induction"),
        Tally::new("div v"),
        Tally::new("div B"),
    ];
    let mut min_pressure = f64::INFINITY;
    let mut n_skipped = 0;
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let k = [k1, k2, k3];
                match physical_point_residuals(m, k)? {
                    None => n_skipped += 1,
                    Some((momentum, induction, div_v, div_b, pressure)) => {
                        tallies[0].push(momentum.max_abs(), k);
                        tallies[1].push(induction.max_abs(), k);
                        tallies[2].push(div_v, k);
                        tallies[3].push(div_b, k);
                        min_pressure = min_pressure.min(pressure);
                    }
                }
            }
        }
    }
    Ok(finish_report(
        "physical", m, grid, tol, tallies, min_pressure, n_skipped,
    ))
}

/// Compare analytic partials against central finite differences of step
/// `h` on a grid inset by `h` from the box.  First partials are checked
/// against differenced positions; second partials against differenced
/// analytic first partials (one analytic layer down), which keeps both
/// comparisons at O(h^2) truncation.
pub fn fd_crosscheck(m: &FlowMap, grid: &GridSpec, h: f64, tol: f64) -> Result<ResidualReport> {
    if !(h > 0.0) {
        return Err(Error::BadGrid(format!("step h = {h} must be positive")));
    }
    let axes = grid.inset_axes(m.domain(), h)?;
    const NAMES: [&str; 9] = [
        "dx/dk1",
        "dx/dk2",
        "dx/dk3",
        "d2x/dk1dk1",
        "d2x/dk1dk2",
        "d2x/dk1dk3",
        "d2x/dk2dk2",
        "d2x/dk2dk3",
        "d2x/dk3dk3",
    ];
    let mut tallies: Vec<Tally> = NAMES.into_iter().map(Tally::new).collect();
    let mut min_pressure = f64::INFINITY;
    let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    for &k1 in &axes[0] {
        for &k2 in &axes[1] {
            for &k3 in &axes[2] {
                let k = [k1, k2, k3];
                let center = m.jet(k)?;
                let mut plus = [FlowJet::default(); 3];
                let mut minus = [FlowJet::default(); 3];
                for i in 0..3 {
                    let mut kp = k;
                    kp[i] += h;
                    let mut km = k;
                    km[i] -= h;
                    plus[i] = m.jet(kp)?;
                    minus[i] = m.jet(km)?;
                }
                for i in 0..3 {
                    let fd = (plus[i].x - minus[i].x) / (2.0 * h);
                    let dev = relative_dev(fd, center.first[i]);
                    tallies[i].push(dev, k);
                }
                for (slot, &(i, j)) in pairs.iter().enumerate() {
                    let fd = (plus[i].first[j] - minus[i].first[j]) / (2.0 * h);
                    let dev = relative_dev(fd, center.second[i][j]);
                    tallies[3 + slot].push(dev, k);
                }
                let b = center.magnetic();
                min_pressure = min_pressure.min(m.total_pressure() - 0.5 * b.norm_sq());
            }
        }
    }
    Ok(finish_report(
        "fd-crosscheck",
        m,
        grid,
        tol,
        tallies,
        min_pressure,
        0,
    ))
}

/// Componentwise |fd - analytic| / (1 + |analytic|), collapsed to the
/// worst component.
fn relative_dev(fd: Vec3, analytic: Vec3) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..3 {
        let dev = (fd[c] - analytic[c]).abs() / (1.0 + analytic[c].abs());
        worst = worst.max(dev);
    }
    worst
}
