//! Flow maps: curvilinear coordinates k = (k1, k2, k3) -> space, with the
//! plasma fields read off the coordinate tangents.
//!
//! The first two tangents of a flow map are the commuting fields
//!
//! ```text
//! a = dx/dk1,   b = dx/dk2,
//! ```
//!
//! and the physical fields are their half-sum and half-difference:
//! v = (a + b)/2, B = (b - a)/2.  Every map built by this crate keeps the
//! total pressure P = p + |B|^2/2 constant (density is one), so the gas
//! pressure is p = P - |B|^2/2 pointwise.
//!
//! [`FlowKernel`] is the raw evaluator — position plus all first and
//! second partials at a point, with no domain policy.  [`FlowMap`] wraps a
//! kernel with the closed box it is valid on, the constant total pressure,
//! and a family label, and exposes the derived quantities: tangent basis,
//! plasma state, Jacobian determinant, and the signed discriminant
//! a . b = |v|^2 - |B|^2 that separates sub- from super-Alfvenic flow.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{det3, Vec3};

/// |a . b| at or below this is classified as Alfvenic rather than signed.
pub const ALFVEN_DEAD_BAND: f64 = 1e-12;

/// Position with all first and second partials in k.
#[derive(Copy, Clone, Debug, Default)]
pub struct FlowJet {
    pub x: Vec3,
    /// first[i] = dx/dk(i+1)
    pub first: [Vec3; 3],
    /// second[i][j] = d2x/dk(i+1)dk(j+1); symmetric.
    pub second: [[Vec3; 3]; 3],
}

impl FlowJet {
    /// Commuting field a = dx/dk1.
    pub fn a(&self) -> Vec3 {
        self.first[0]
    }

    /// Commuting field b = dx/dk2.
    pub fn b(&self) -> Vec3 {
        self.first[1]
    }

    /// Mixed partial d2x/dk1 dk2 — identically zero for constant-pressure
    /// maps, and the quantity the reduced-system residuals contract with.
    pub fn x12(&self) -> Vec3 {
        self.second[0][1]
    }

    /// Jacobian determinant det(dx/dk).
    pub fn det(&self) -> f64 {
        det3(self.first[0], self.first[1], self.first[2])
    }

    /// Signed discriminant a . b = |v|^2 - |B|^2.
    pub fn alfven_discriminant(&self) -> f64 {
        self.a().dot(self.b())
    }

    pub fn velocity(&self) -> Vec3 {
        (self.a() + self.b()) * 0.5
    }

    pub fn magnetic(&self) -> Vec3 {
        (self.b() - self.a()) * 0.5
    }
}

/// Raw jet evaluator.  Implementations must be pure: same k, same jet.
pub trait FlowKernel: Send + Sync {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet>;
}

/// Closed box in curvilinear coordinates.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Box3 {
    pub k1: [f64; 2],
    pub k2: [f64; 2],
    pub k3: [f64; 2],
}

impl Box3 {
    pub fn new(k1: [f64; 2], k2: [f64; 2], k3: [f64; 2]) -> Self {
        assert!(
            k1[0] <= k1[1] && k2[0] <= k2[1] && k3[0] <= k3[1],
            "inverted box bounds"
        );
        Box3 { k1, k2, k3 }
    }

    pub fn axis(&self, i: usize) -> [f64; 2] {
        [self.k1, self.k2, self.k3][i]
    }

    pub fn contains(&self, k: [f64; 3]) -> bool {
        (0..3).all(|i| {
            let [lo, hi] = self.axis(i);
            lo <= k[i] && k[i] <= hi
        })
    }

    pub fn covers(&self, other: &Box3) -> bool {
        (0..3).all(|i| {
            let [lo, hi] = self.axis(i);
            let [olo, ohi] = other.axis(i);
            lo <= olo && ohi <= hi
        })
    }
}

/// Flow regime by the sign of a . b.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MachRegime {
    SubAlfvenic,
    Alfvenic,
    SuperAlfvenic,
}

impl MachRegime {
    /// Classify a discriminant value, with a symmetric dead band around
    /// zero so exact-zero constructions are not misread through rounding.
    pub fn classify(discriminant: f64) -> MachRegime {
        if discriminant.abs() <= ALFVEN_DEAD_BAND {
            MachRegime::Alfvenic
        } else if discriminant > 0.0 {
            MachRegime::SuperAlfvenic
        } else {
            MachRegime::SubAlfvenic
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MachRegime::SubAlfvenic => "sub-alfvenic",
            MachRegime::Alfvenic => "alfvenic",
            MachRegime::SuperAlfvenic => "super-alfvenic",
        }
    }
}

/// Plasma fields at one point in space.
#[derive(Copy, Clone, Debug)]
pub struct PlasmaState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub magnetic: Vec3,
    /// Gas pressure p = P - |B|^2 / 2.
    pub pressure: f64,
}

/// A flow map: kernel + validity box + constant total pressure.
#[derive(Clone)]
pub struct FlowMap {
    pub(crate) kernel: Arc<dyn FlowKernel>,
    domain: Box3,
    p0: f64,
    label: String,
}

impl std::fmt::Debug for FlowMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowMap")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("p0", &self.p0)
            .finish_non_exhaustive()
    }
}

impl FlowMap {
    pub fn new(
        kernel: Arc<dyn FlowKernel>,
        domain: Box3,
        p0: f64,
        label: impl Into<String>,
    ) -> FlowMap {
        FlowMap {
            kernel,
            domain,
            p0,
            label: label.into(),
        }
    }

    pub fn domain(&self) -> &Box3 {
        &self.domain
    }

    /// Constant total pressure P = p + |B|^2 / 2.
    pub fn total_pressure(&self) -> f64 {
        self.p0
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Full 2-jet at k, refusing points outside the validity box.
    pub fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        if !self.domain.contains(k) {
            return Err(Error::OutsideDomain { point: k });
        }
        self.kernel.jet(k)
    }

    pub fn position(&self, k: [f64; 3]) -> Result<Vec3> {
        Ok(self.jet(k)?.x)
    }

    /// Plasma fields at k.
    pub fn fields(&self, k: [f64; 3]) -> Result<PlasmaState> {
        let jet = self.jet(k)?;
        let magnetic = jet.magnetic();
        Ok(PlasmaState {
            position: jet.x,
            velocity: jet.velocity(),
            magnetic,
            pressure: self.p0 - 0.5 * magnetic.norm_sq(),
        })
    }

    pub fn jacobian_det(&self, k: [f64; 3]) -> Result<f64> {
        Ok(self.jet(k)?.det())
    }

    pub fn alfven_discriminant(&self, k: [f64; 3]) -> Result<f64> {
        Ok(self.jet(k)?.alfven_discriminant())
    }

    pub fn regime(&self, k: [f64; 3]) -> Result<MachRegime> {
        Ok(MachRegime::classify(self.alfven_discriminant(k)?))
    }
}
