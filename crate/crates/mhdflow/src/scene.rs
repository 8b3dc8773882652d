//! Declarative scene files: a JSON schema describing one flow — family,
//! area-preserving map, total pressure, domain box, and an optional chain of
//! symmetry transforms — plus the builder that turns a parsed scene into a
//! working [`FlowMap`].
//!
//! The schema is strict: unknown keys are rejected, and each family tag
//! admits exactly its own fields, so a typo fails loudly instead of being
//! silently ignored.

use serde::{Deserialize, Serialize};

use crate::areamap::{AreaMap, Box2, GuessStrategy, ShearAxis};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::families;
use crate::flowmap::{Box3, FlowMap};
use crate::transforms;

/// Solution family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    /// Planar drift: `x = (k1 + t1(k2,k3), t2, t3)`; field `t1`.
    S1,
    /// Sheared tube: `x = (k1 + F(t3), beta(k1) + t2, t3)`; fields `beta`, `F`.
    S2,
    /// Axial channel: `x = (k1, beta(k1) + t2, gamma(k1) + t3)`; fields `beta`, `gamma`.
    S3,
    /// Free translational form `x = sigma(k1,k3) + tau(k2,k3)`; fields `sigma`, `tau`.
    General,
}

impl FamilyTag {
    fn label(self) -> &'static str {
        match self {
            FamilyTag::S1 => "s1",
            FamilyTag::S2 => "s2",
            FamilyTag::S3 => "s3",
            FamilyTag::General => "general",
        }
    }
}

/// How the area-preserving pair `(t2, t3)(k2, k3)` is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaMapMode {
    /// Explicit expressions `t2`, `t3`.
    Pair,
    /// Generating potential `phi(k3, t2)` solved by Newton iteration.
    Potential,
    /// Built-in concentric-circles map.
    Circular,
}

/// One shear modification `t2 += g(t3)` (axis 2) or `t3 += g(t2)` (axis 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearSpec {
    /// Which component the shear is added to: 2 or 3.
    pub axis: u8,
    /// Shear profile, a function of the other component.
    pub g: String,
}

/// Planar window of an area-preserving map, in `(k2, k3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain2Spec {
    pub k2: [f64; 2],
    pub k3: [f64; 2],
}

/// Area-preserving map fragment of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaMapSpec {
    pub mode: AreaMapMode,
    /// Pair mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<String>,
    /// Pair mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<String>,
    /// Potential mode only: the generating potential over `(k3, t2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Potential mode only: optional root bracket for the Newton solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    /// Shears applied in order after the base map.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shear: Vec<ShearSpec>,
    /// Validity window of the map; defaults to the scene domain's
    /// `(k2, k3)` face, and must cover it when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain2Spec>,
}

/// Scene domain box in curvilinear coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub k1: [f64; 2],
    pub k2: [f64; 2],
    pub k3: [f64; 2],
}

/// Current-sheet parameters a scene may bundle as defaults for sheet
/// extraction: jump level `c` and the scaling profile values on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetSpec {
    pub c: f64,
    pub phi_minus: f64,
    pub phi_plus: f64,
    #[serde(default = "default_sheet_res")]
    pub res: [usize; 2],
}

fn default_sheet_res() -> [usize; 2] {
    [32, 32]
}

/// One field-line seed for trace runs, as stored in a seeds file
/// (a JSON array of these).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSeed {
    pub kind: crate::geometry::LineKind,
    /// Label-space point the line passes through at `s = 0`.
    pub k0: [f64; 3],
    /// Parameter range to sample.
    pub s: [f64; 2],
    /// Number of samples over the range.
    #[serde(default = "default_seed_samples")]
    pub n: usize,
}

fn default_seed_samples() -> usize {
    65
}

/// Load a seeds file: a JSON array of [`TraceSeed`] entries.
pub fn load_seeds(path: &std::path::Path) -> Result<Vec<TraceSeed>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| scene_err(format!("seeds file: {e}")))
}

/// One entry of the transform chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransformSpec {
    /// Field-scaling symmetry with profile `phi(k3)`.
    #[serde(rename = "bogoyavlenskij")]
    Bogoyavlenskij(String),
    /// Label translation by `[psi(k3), chi(k3)]`.
    #[serde(rename = "translate")]
    Translate([String; 2]),
}

/// A complete declarative scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub family: FamilyTag,
    /// s1: drift `t1(k2, k3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<String>,
    /// s2/s3: transverse shift `beta(k1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    /// s2: axial drift `F(t3)` (JSON key `F`).
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// s3: second shift `gamma(k1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    /// general: components of `sigma(k1, k3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[String; 3]>,
    /// general: components of `tau(k2, k3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<[String; 3]>,
    /// Area-preserving map; required except for the general family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub areamap: Option<AreaMapSpec>,
    /// Constant total pressure; defaults to zero (only its gradient enters
    /// the balance, so any constant verifies identically).
    #[serde(rename = "P0", default)]
    pub p0: f64,
    pub domain: DomainSpec,
    /// Symmetry transforms applied in order after construction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<TransformSpec>,
    /// Default current-sheet parameters for this scene, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_sheet: Option<SheetSpec>,
}

fn scene_err(msg: impl Into<String>) -> Error {
    Error::Scene(msg.into())
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) {
        return Err(scene_err(format!("{name} range {r:?} is not finite")));
    }
    if r[0] > r[1] {
        return Err(scene_err(format!("{name} range {r:?} is inverted")));
    }
    Ok(())
}

fn parse_expr(field: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| scene_err(format!("field \"{field}\": {e}")))
}

fn required<'a>(field: &'a Option<String>, name: &str, family: &str) -> Result<&'a str> {
    field
        .as_deref()
        .ok_or_else(|| scene_err(format!("family \"{family}\" requires field \"{name}\"")))
}

fn forbidden<T>(field: &Option<T>, name: &str, family: &str) -> Result<()> {
    if field.is_some() {
        return Err(scene_err(format!(
            "family \"{family}\" does not take field \"{name}\""
        )));
    }
    Ok(())
}

impl AreaMapSpec {
    fn forbid(&self, mode_needs: &str, field: &str, present: bool) -> Result<()> {
        if present {
            return Err(scene_err(format!(
                "areamap mode \"{mode_needs}\" does not take field \"{field}\""
            )));
        }
        Ok(())
    }

    fn build(&self, fallback: Domain2Spec) -> Result<AreaMap> {
        let window = self.domain.unwrap_or(fallback);
        check_range("areamap.k2", window.k2)?;
        check_range("areamap.k3", window.k3)?;
        let window = Box2::new(window.k2, window.k3);
        let base = match self.mode {
            AreaMapMode::Pair => {
                self.forbid("pair", "phi", self.phi.is_some())?;
                self.forbid("pair", "bracket", self.bracket.is_some())?;
                let t2 = self
                    .t2
                    .as_deref()
                    .ok_or_else(|| scene_err("areamap mode \"pair\" requires field \"t2\""))?;
                let t3 = self
                    .t3
                    .as_deref()
                    .ok_or_else(|| scene_err("areamap mode \"pair\" requires field \"t3\""))?;
                AreaMap::from_pair(
                    parse_expr("areamap.t2", t2)?,
                    parse_expr("areamap.t3", t3)?,
                    window,
                )?
            }
            AreaMapMode::Potential => {
                self.forbid("potential", "t2", self.t2.is_some())?;
                self.forbid("potential", "t3", self.t3.is_some())?;
                let phi = self.phi.as_deref().ok_or_else(|| {
                    scene_err("areamap mode \"potential\" requires field \"phi\"")
                })?;
                let guess = match self.bracket {
                    Some([lo, hi]) => {
                        check_range("areamap.bracket", [lo, hi])?;
                        GuessStrategy::Bracket(lo, hi)
                    }
                    None => GuessStrategy::Zero,
                };
                AreaMap::from_potential(parse_expr("areamap.phi", phi)?, window, guess)?
            }
            AreaMapMode::Circular => {
                self.forbid("circular", "t2", self.t2.is_some())?;
                self.forbid("circular", "t3", self.t3.is_some())?;
                self.forbid("circular", "phi", self.phi.is_some())?;
                self.forbid("circular", "bracket", self.bracket.is_some())?;
                AreaMap::circular(window)?
            }
        };
        let mut map = base;
        for (i, s) in self.shear.iter().enumerate() {
            let axis = match s.axis {
                2 => ShearAxis::T2,
                3 => ShearAxis::T3,
                other => {
                    return Err(scene_err(format!(
                        "areamap.shear[{i}].axis must be 2 or 3, got {other}"
                    )))
                }
            };
            map = map.with_shear(axis, parse_expr("areamap.shear.g", &s.g)?)?;
        }
        Ok(map)
    }
}

impl SceneFile {
    /// Parse a scene from JSON text, rejecting anything off-schema.
    pub fn parse_json(text: &str) -> Result<SceneFile> {
        serde_json::from_str(text).map_err(|e| scene_err(format!("scene schema: {e}")))
    }

    /// Load and parse a scene file.
    pub fn load(path: &std::path::Path) -> Result<SceneFile> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_json(&text)
    }

    /// Serialize back to canonical pretty JSON (stable field order).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serialization cannot fail");
        s.push('\n');
        s
    }

    /// Build the flow this scene describes: area map, family, then the
    /// transform chain in order.
    pub fn build(&self) -> Result<FlowMap> {
        check_range("domain.k1", self.domain.k1)?;
        check_range("domain.k2", self.domain.k2)?;
        check_range("domain.k3", self.domain.k3)?;
        if !self.p0.is_finite() {
            return Err(scene_err(format!("P0 = {} is not finite", self.p0)));
        }
        let domain = Box3::new(self.domain.k1, self.domain.k2, self.domain.k3);
        let fam = self.family.label();

        let areamap = |spec: &Option<AreaMapSpec>| -> Result<AreaMap> {
            spec.as_ref()
                .ok_or_else(|| scene_err(format!("family \"{fam}\" requires field \"areamap\"")))?
                .build(Domain2Spec {
                    k2: self.domain.k2,
                    k3: self.domain.k3,
                })
        };

        let base = match self.family {
            FamilyTag::S1 => {
                forbidden(&self.beta, "beta", fam)?;
                forbidden(&self.f, "F", fam)?;
                forbidden(&self.gamma, "gamma", fam)?;
                forbidden(&self.sigma, "sigma", fam)?;
                forbidden(&self.tau, "tau", fam)?;
                let t1 = required(&self.t1, "t1", fam)?;
                families::build_s1(parse_expr("t1", t1)?, areamap(&self.areamap)?, domain, self.p0)?
            }
            FamilyTag::S2 => {
                forbidden(&self.t1, "t1", fam)?;
                forbidden(&self.gamma, "gamma", fam)?;
                forbidden(&self.sigma, "sigma", fam)?;
                forbidden(&self.tau, "tau", fam)?;
                let beta = required(&self.beta, "beta", fam)?;
                let f = required(&self.f, "F", fam)?;
                families::build_s2(
                    parse_expr("beta", beta)?,
                    parse_expr("F", f)?,
                    areamap(&self.areamap)?,
                    domain,
                    self.p0,
                )?
            }
            FamilyTag::S3 => {
                forbidden(&self.t1, "t1", fam)?;
                forbidden(&self.f, "F", fam)?;
                forbidden(&self.sigma, "sigma", fam)?;
                forbidden(&self.tau, "tau", fam)?;
                let beta = required(&self.beta, "beta", fam)?;
                let gamma = required(&self.gamma, "gamma", fam)?;
                families::build_s3(
                    parse_expr("beta", beta)?,
                    parse_expr("gamma", gamma)?,
                    areamap(&self.areamap)?,
                    domain,
                    self.p0,
                )?
            }
            FamilyTag::General => {
                forbidden(&self.t1, "t1", fam)?;
                forbidden(&self.beta, "beta", fam)?;
                forbidden(&self.f, "F", fam)?;
                forbidden(&self.gamma, "gamma", fam)?;
                forbidden(&self.areamap, "areamap", fam)?;
                let sigma = self
                    .sigma
                    .as_ref()
                    .ok_or_else(|| scene_err("family \"general\" requires field \"sigma\""))?;
                let tau = self
                    .tau
                    .as_ref()
                    .ok_or_else(|| scene_err("family \"general\" requires field \"tau\""))?;
                let parse3 = |name: &str, parts: &[String; 3]| -> Result<[Expr; 3]> {
                    Ok([
                        parse_expr(name, &parts[0])?,
                        parse_expr(name, &parts[1])?,
                        parse_expr(name, &parts[2])?,
                    ])
                };
                families::build_general(
                    parse3("sigma", sigma)?,
                    parse3("tau", tau)?,
                    domain,
                    self.p0,
                )?
            }
        };

        let mut flow = base;
        for t in &self.transforms {
            flow = match t {
                TransformSpec::Bogoyavlenskij(phi) => {
                    transforms::bogoyavlenskij(&flow, parse_expr("bogoyavlenskij", phi)?)?
                }
                TransformSpec::Translate([psi, chi]) => transforms::translate(
                    &flow,
                    parse_expr("translate.psi", psi)?,
                    parse_expr("translate.chi", chi)?,
                )?,
            };
        }
        Ok(flow)
    }
}
