//! Symmetry transforms of flow maps, and the surface currents produced
//! when the scaling transform jumps across a coordinate surface.
//!
//! Both transforms act by reparametrizing curvilinear coordinates,
//! x~(k) = x(g(k)), with g chosen so the reduced equations are preserved:
//!
//! - [`bogoyavlenskij`]: g = (phi(k3) k1, k2 / phi(k3), k3).  The commuting
//!   fields rescale reciprocally, a -> phi a, b -> b / phi, layer by layer
//!   in k3; total pressure, the discriminant a . b, and every k3 level set
//!   are unchanged.
//! - [`translate`]: g = (k1 + psi(k3), k2 + chi(k3), k3), a layerwise
//!   shift along the commuting directions.
//!
//! The wrapped kernel composes jets by the full second-order chain rule,
//! with g's partials obtained symbolically — no finite differences.
//!
//! A scaling with a jump discontinuity at k3 = c leaves the flow an exact
//! weak solution but deposits a surface current on the level set.
//! [`current_sheet`] evaluates that current from the jump formula;
//! [`current_sheet_oracle`] recomputes it from the field discontinuity
//! n x (B_above - B_below) as an independent check.  The discontinuous
//! scaling is described structurally by its two limits (phi_minus,
//! phi_plus), never as an expression.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, Trivariate, Univariate};
use crate::flowmap::{FlowJet, FlowKernel, FlowMap};
use crate::linalg::{linspace, Vec3};

/// Samples along k3 checked for a vanishing or sign-changing scaling.
pub const PHI_PROBE_RES: usize = 101;
/// |phi| below this counts as vanishing.
pub const PHI_FLOOR: f64 = 1e-12;
/// |x1 x x2| below this means the surface parametrization is degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Scaling transform: x~(k) = x(phi(k3) k1, k2 / phi(k3), k3).
///
/// `phi` must be an expression in k3 alone, nonvanishing (hence of one
/// sign) across the map's k3 range; this is checked on a probe line, with
/// a bisection refinement so a detected sign change reports the actual
/// zero crossing.
pub fn bogoyavlenskij(m: &FlowMap, phi: Expr) -> Result<FlowMap> {
    let phi = Univariate::new(phi, "k3")?;
    probe_phi(&phi, m.domain().k3)?;
    let k1 = Expr::var("k1");
    let k2 = Expr::var("k2");
    let k3 = Expr::var("k3");
    let g = [
        Trivariate::new(Expr::mul(phi.expr().clone(), k1), REPARAM_VARS)?,
        Trivariate::new(Expr::div(k2, phi.expr().clone()), REPARAM_VARS)?,
        Trivariate::new(k3, REPARAM_VARS)?,
    ];
    Ok(reparametrize(m, g, "scaled"))
}

/// Shift transform: x~(k) = x(k1 + psi(k3), k2 + chi(k3), k3).
pub fn translate(m: &FlowMap, psi: Expr, chi: Expr) -> Result<FlowMap> {
    let psi = Univariate::new(psi, "k3")?;
    let chi = Univariate::new(chi, "k3")?;
    let g = [
        Trivariate::new(Expr::add(Expr::var("k1"), psi.expr().clone()), REPARAM_VARS)?,
        Trivariate::new(Expr::add(Expr::var("k2"), chi.expr().clone()), REPARAM_VARS)?,
        Trivariate::new(Expr::var("k3"), REPARAM_VARS)?,
    ];
    Ok(reparametrize(m, g, "translated"))
}

const REPARAM_VARS: [&str; 3] = ["k1", "k2", "k3"];

fn reparametrize(m: &FlowMap, g: [Trivariate; 3], tag: &str) -> FlowMap {
    let kernel = ReparamKernel {
        inner: m.kernel.clone(),
        g,
    };
    FlowMap::new(
        Arc::new(kernel),
        *m.domain(),
        m.total_pressure(),
        format!("{}+{}", m.label(), tag),
    )
}

fn probe_phi(phi: &Univariate, range: [f64; 2]) -> Result<()> {
    let mut prev: Option<(f64, f64)> = None;
    for &k3 in &linspace(range[0], range[1], PHI_PROBE_RES) {
        let v = phi.value(k3)?;
        if v.abs() < PHI_FLOOR {
            return Err(Error::PhiVanishes { at: k3, value: v });
        }
        if let Some((pk, pv)) = prev {
            if pv.signum() != v.signum() {
                // a zero lies between the samples; bisect to report it
                let (mut lo, mut hi, mut flo) = (pk, k3, pv);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let fm = phi.value(mid)?;
                    if fm.abs() < PHI_FLOOR {
                        return Err(Error::PhiVanishes { at: mid, value: fm });
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let mid = 0.5 * (lo + hi);
                return Err(Error::PhiVanishes {
                    at: mid,
                    value: phi.value(mid)?,
                });
            }
        }
        prev = Some((k3, v));
    }
    Ok(())
}

/// x~(k) = x(g(k)) with second-order chain rule:
///
///   d(x~)/dki      = sum_m x_m g^m_i
///   d2(x~)/dki dkj = sum_{m,n} x_mn g^m_i g^n_j + sum_m x_m g^m_ij
///
/// The inner kernel is called directly: a transform may legitimately pull
/// arguments from outside the box the inner map was declared on, and the
/// transformed map's own box (unchanged) is enforced by its `FlowMap`.
struct ReparamKernel {
    inner: Arc<dyn FlowKernel>,
    g: [Trivariate; 3],
}

impl FlowKernel for ReparamKernel {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        let mut gv = [0.0; 3];
        let mut gd = [[0.0; 3]; 3];
        let mut gdd = [[[0.0; 3]; 3]; 3];
        for m in 0..3 {
            let (v, d, dd) = self.g[m].jet(k)?;
            gv[m] = v;
            gd[m] = d;
            gdd[m] = dd;
        }
        let inner = self.inner.jet(gv)?;
        let mut out = FlowJet {
            x: inner.x,
            ..FlowJet::default()
        };
        for i in 0..3 {
            let mut v = Vec3::default();
            for m in 0..3 {
                v = v + inner.first[m] * gd[m][i];
            }
            out.first[i] = v;
        }
        for i in 0..3 {
            for j in i..3 {
                let mut v = Vec3::default();
                for m in 0..3 {
                    for n in 0..3 {
                        v = v + inner.second[m][n] * (gd[m][i] * gd[n][j]);
                    }
                    v = v + inner.first[m] * gdd[m][i][j];
                }
                out.second[i][j] = v;
                out.second[j][i] = v;
            }
        }
        Ok(out)
    }
}

/// A scaling jump at k3 = c: the limits of phi from below and above.
#[derive(Copy, Clone, Debug)]
pub struct CurrentSheetSpec {
    /// Location of the jump surface, strictly inside the k3 range.
    pub c: f64,
    /// Limit of phi from k3 < c; nonzero.
    pub phi_minus: f64,
    /// Limit of phi from k3 > c; nonzero.
    pub phi_plus: f64,
    /// Sampling resolution over (k1, k2).
    pub res: [usize; 2],
}

/// One sample of the sheet: surface point, oriented unit normal, and
/// surface current density.
#[derive(Copy, Clone, Debug)]
pub struct SheetSample {
    pub k1: f64,
    pub k2: f64,
    pub x: Vec3,
    pub n: Vec3,
    pub j: Vec3,
}

/// Surface current of the jump, from the closed-form jump formula
///
///   J = ((phi- - phi+)/2) n x ( x2 / (phi- phi+) + x1 )
///
/// with x1, x2 the tangents of the *untransformed* map on the surface and
/// n the unit normal along x1 x x2, oriented toward increasing k3.
pub fn current_sheet(m: &FlowMap, spec: &CurrentSheetSpec) -> Result<Vec<SheetSample>> {
    let (pm, pp) = (spec.phi_minus, spec.phi_plus);
    sheet_samples(m, spec, |jet, n| {
        let w = jet.first[1] / (pm * pp) + jet.first[0];
        n.cross(w) * (0.5 * (pm - pp))
    })
}

/// The same current, recomputed independently as n x (B+ - B-) from the
/// limiting transformed magnetic fields on the two sides,
/// B(side) = (b / phi(side) - phi(side) a) / 2.  Algebraically identical
/// to [`current_sheet`]; numerically a separate code path.
pub fn current_sheet_oracle(m: &FlowMap, spec: &CurrentSheetSpec) -> Result<Vec<SheetSample>> {
    let (pm, pp) = (spec.phi_minus, spec.phi_plus);
    sheet_samples(m, spec, |jet, n| {
        let (a, b) = (jet.first[0], jet.first[1]);
        let below = (b / pm - a * pm) * 0.5;
        let above = (b / pp - a * pp) * 0.5;
        n.cross(above - below)
    })
}

fn sheet_samples(
    m: &FlowMap,
    spec: &CurrentSheetSpec,
    current: impl Fn(&FlowJet, Vec3) -> Vec3,
) -> Result<Vec<SheetSample>> {
    if spec.phi_minus.abs() < PHI_FLOOR || spec.phi_plus.abs() < PHI_FLOOR {
        return Err(Error::BadSheet(format!(
            "scaling limits must be nonzero, got phi- = {}, phi+ = {}",
            spec.phi_minus, spec.phi_plus
        )));
    }
    let [lo, hi] = m.domain().k3;
    if !(lo < spec.c && spec.c < hi) {
        return Err(Error::BadSheet(format!(
            "jump location c = {} is not strictly inside the k3 range [{lo}, {hi}]",
            spec.c
        )));
    }
    if spec.res[0] == 0 || spec.res[1] == 0 {
        return Err(Error::BadSheet("sampling resolution must be positive".into()));
    }
    let k1s = linspace(m.domain().k1[0], m.domain().k1[1], spec.res[0]);
    let k2s = linspace(m.domain().k2[0], m.domain().k2[1], spec.res[1]);
    let mut out = Vec::with_capacity(k1s.len() * k2s.len());
    for &k1 in &k1s {
        for &k2 in &k2s {
            let jet = m.jet([k1, k2, spec.c])?;
            let raw = jet.first[0].cross(jet.first[1]);
            let len = raw.norm();
            if len < DEGENERATE_AREA {
                return Err(Error::BadSheet(format!(
                    "degenerate surface parametrization at (k1, k2) = ({k1}, {k2}): |x1 x x2| = {len:e}"
                )));
            }
            let mut n = raw / len;
            let orient = n.dot(jet.first[2]);
            if orient == 0.0 {
                return Err(Error::BadSheet(format!(
                    "cannot orient the normal at (k1, k2) = ({k1}, {k2}): x3 is tangent to the surface"
                )));
            }
            if orient < 0.0 {
                n = -n;
            }
            let j = current(&jet, n);
            out.push(SheetSample { k1, k2, x: jet.x, n, j });
        }
    }
    Ok(out)
}
