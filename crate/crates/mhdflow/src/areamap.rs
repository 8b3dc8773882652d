//! Area-preserving planar maps (k2, k3) -> (tau2, tau3).
//!
//! Constant-total-pressure flows factor through a planar map whose
//! Jacobian determinant
//!
//! ```text
//! d(tau2)/d(k2) * d(tau3)/d(k3) - d(tau3)/d(k2) * d(tau2)/d(k3) = 1
//! ```
//!
//! must equal one everywhere.  Three constructions are offered:
//!
//! - [`AreaMap::from_pair`]: both components given in closed form; the
//!   determinant condition is *checked* on a probe grid, not solved.
//! - [`AreaMap::from_potential`]: the map is defined implicitly by a
//!   generating potential `phi(k3, t2)` through
//!   `k2 = d(phi)/d(k3)`, `tau3 = d(phi)/d(tau2)`, which satisfies the
//!   determinant condition identically.  Evaluation solves the first
//!   relation for tau2 by a guarded Newton iteration.
//! - [`AreaMap::circular`]: the concentric-circles map
//!   `tau2 = sqrt(2 k3) sin k2`, `tau3 = sqrt(2 k3) cos k2`, hand-coded so
//!   geometry tests do not depend on either the expression engine or the
//!   Newton solve.
//!
//! [`AreaMap::with_shear`] post-composes any of these with a unit-Jacobian
//! shear, `tau2 += g(tau3)` or `tau3 += g(tau2)`.
//!
//! All evaluators return 2-jets (value, first and second partials): the
//! flow map needs second derivatives of tau to form its own mixed
//! partials.  In potential mode the second partials come from
//! differentiating the implicit relations, never from finite differences.

use crate::error::{Error, Result};
use crate::expr::{Bivariate, Expr, Univariate};
use crate::linalg::{linspace, midpoints};

/// Newton residual tolerance on |d(phi)/d(k3) - k2|.
pub const NEWTON_TOL: f64 = 1e-13;
/// Iteration cap for one Newton solve.
pub const NEWTON_MAX_ITER: usize = 50;
/// Below this |d2(phi)/d(k3)d(t2)| the implicit solve is declared
/// degenerate: the generating relation no longer determines tau2.
pub const HODOGRAPH_FLOOR: f64 = 1e-12;
/// Probe-grid resolution (per axis) used to validate a map at construction.
pub const PROBE_RES: usize = 50;
/// Construction rejects a map whose probe determinant strays further than
/// this from one.
pub const AREA_TOL: f64 = 1e-9;

/// Value with first and second partials in (k2, k3).
#[derive(Copy, Clone, Debug, Default)]
pub struct Jet2 {
    pub v: f64,
    /// [d/dk2, d/dk3]
    pub d: [f64; 2],
    /// Symmetric second partials, indexed the same way.
    pub dd: [[f64; 2]; 2],
}

/// 2-jets of both map components at one point.
#[derive(Copy, Clone, Debug)]
pub struct PlanarJet {
    pub t2: Jet2,
    pub t3: Jet2,
}

impl PlanarJet {
    /// Jacobian determinant of the planar map.
    pub fn det(&self) -> f64 {
        self.t2.d[0] * self.t3.d[1] - self.t3.d[0] * self.t2.d[1]
    }
}

/// Closed rectangle in the (k2, k3) plane.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Box2 {
    pub k2: [f64; 2],
    pub k3: [f64; 2],
}

impl Box2 {
    pub fn new(k2: [f64; 2], k3: [f64; 2]) -> Self {
        assert!(k2[0] <= k2[1] && k3[0] <= k3[1], "inverted box bounds");
        Box2 { k2, k3 }
    }

    pub fn contains(&self, k2: f64, k3: f64) -> bool {
        self.k2[0] <= k2 && k2 <= self.k2[1] && self.k3[0] <= k3 && k3 <= self.k3[1]
    }

    pub fn covers(&self, other: &Box2) -> bool {
        self.k2[0] <= other.k2[0]
            && other.k2[1] <= self.k2[1]
            && self.k3[0] <= other.k3[0]
            && other.k3[1] <= self.k3[1]
    }
}

/// Seeding rule for the implicit solve.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum GuessStrategy {
    /// Seed every solve at tau2 = 0.
    Zero,
    /// Seed at the bracket midpoint; the bracket also enables a bisection
    /// fallback if Newton stalls.
    Bracket(f64, f64),
}

/// Diagnostics from one implicit solve.
#[derive(Copy, Clone, Debug)]
pub struct SolveStats {
    pub root: f64,
    /// Newton steps accepted in the final (direct or last-leg) solve.
    pub iterations: usize,
}

#[derive(Clone, Debug)]
enum Kernel {
    Pair { t2: Bivariate, t3: Bivariate },
    Potential(Box<PotentialKernel>),
    Circular,
    Shear { inner: Box<Kernel>, shear: Shear },
}

#[derive(Clone, Debug)]
struct Shear {
    axis: ShearAxis,
    g: Univariate,
}

/// Which component the shear term is added to.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum ShearAxis {
    /// tau2 += g(tau3)
    T2,
    /// tau3 += g(tau2)
    T3,
}

/// An area-preserving planar map over a closed rectangle.
#[derive(Clone, Debug)]
pub struct AreaMap {
    kernel: Kernel,
    domain: Box2,
}

impl AreaMap {
    /// Build from closed-form components `t2(k2, k3)`, `t3(k2, k3)`.
    /// Construction walks an inclusive probe grid over `domain` and rejects
    /// the map if it cannot be evaluated there or its determinant strays
    /// from one; boundary singularities are caught because the grid touches
    /// the box edges.
    pub fn from_pair(t2: Expr, t3: Expr, domain: Box2) -> Result<AreaMap> {
        let kernel = Kernel::Pair {
            t2: Bivariate::new(t2, ["k2", "k3"])?,
            t3: Bivariate::new(t3, ["k2", "k3"])?,
        };
        let map = AreaMap { kernel, domain };
        map.probe()?;
        Ok(map)
    }

    /// Build implicitly from a generating potential `phi(k3, t2)`.
    /// The probe grid is cell-centred: the generating relation is allowed
    /// to fold on the box boundary itself (d2(phi)/d(k3)d(t2) -> inf),
    /// where no finite-precision solve can run; interior probing still
    /// exercises the whole Newton/derivative pipeline.
    pub fn from_potential(phi: Expr, domain: Box2, guess: GuessStrategy) -> Result<AreaMap> {
        let kernel = Kernel::Potential(Box::new(PotentialKernel::new(phi, guess)?));
        let map = AreaMap { kernel, domain };
        map.probe()?;
        Ok(map)
    }

    /// The concentric-circles map, hand-coded.  Requires k3 > 0 on the
    /// whole domain; the circle radius sqrt(2 k3) degenerates at zero.
    pub fn circular(domain: Box2) -> Result<AreaMap> {
        if domain.k3[0] <= 0.0 {
            return Err(Error::SingularInDomain {
                point: [domain.k2[0], domain.k3[0]],
                source: Box::new(Error::EvalDomain {
                    expr: "sqrt(2*k3)".into(),
                    msg: format!(
                        "circular map needs k3 > 0, domain starts at {}",
                        domain.k3[0]
                    ),
                }),
            });
        }
        let map = AreaMap {
            kernel: Kernel::Circular,
            domain,
        };
        map.probe()?;
        Ok(map)
    }

    /// Add a shear `tau2 += g(tau3)` (axis T2) or `tau3 += g(tau2)`
    /// (axis T3).  The shear's Jacobian is exactly one, so the composite
    /// inherits area preservation; the probe re-runs anyway to surface
    /// domain problems in `g`.
    pub fn with_shear(self, axis: ShearAxis, g: Expr) -> Result<AreaMap> {
        let var = match axis {
            ShearAxis::T2 => "t3",
            ShearAxis::T3 => "t2",
        };
        let shear = Shear {
            axis,
            g: Univariate::new(g, var)?,
        };
        let map = AreaMap {
            kernel: Kernel::Shear {
                inner: Box::new(self.kernel),
                shear,
            },
            domain: self.domain,
        };
        map.probe()?;
        Ok(map)
    }

    /// Test-only back door: skip construction validation.  Lets unit tests
    /// observe how downstream checks flag a non-area-preserving map.
    #[cfg(test)]
    pub(crate) fn from_pair_unchecked(t2: Expr, t3: Expr, domain: Box2) -> Result<AreaMap> {
        Ok(AreaMap {
            kernel: Kernel::Pair {
                t2: Bivariate::new(t2, ["k2", "k3"])?,
                t3: Bivariate::new(t3, ["k2", "k3"])?,
            },
            domain,
        })
    }

    pub fn domain(&self) -> &Box2 {
        &self.domain
    }

    /// Evaluate both components with first and second partials.
    pub fn eval(&self, k2: f64, k3: f64) -> Result<PlanarJet> {
        if !self.domain.contains(k2, k3) {
            return Err(Error::OutsideDomain {
                point: [0.0, k2, k3],
            });
        }
        self.kernel.eval(k2, k3)
    }

    /// Evaluation without the box check.  Flow maps own the domain policy
    /// for their three-coordinate box, and coordinate transforms may
    /// legitimately pull points from outside the rectangle this map was
    /// probed on; errors then surface from the expressions themselves.
    pub(crate) fn eval_unchecked(&self, k2: f64, k3: f64) -> Result<PlanarJet> {
        self.kernel.eval(k2, k3)
    }

    /// True when evaluation involves an implicit solve (potential mode,
    /// possibly under shears).  Probing such maps on a boundary-touching
    /// grid is not meaningful: the generating relation may fold exactly on
    /// the box edge, where no finite-precision solve can succeed.
    pub(crate) fn is_implicit(&self) -> bool {
        self.kernel.is_implicit()
    }

    /// Newton diagnostics for implicit maps; `None` when no solve is
    /// involved (pair, circular, shears of those).
    pub fn solve_stats(&self, k2: f64, k3: f64) -> Result<Option<SolveStats>> {
        fn find(kernel: &Kernel, k2: f64, k3: f64) -> Result<Option<SolveStats>> {
            match kernel {
                Kernel::Potential(p) => p.solve(k2, k3).map(Some),
                Kernel::Shear { inner, .. } => find(inner, k2, k3),
                _ => Ok(None),
            }
        }
        find(&self.kernel, k2, k3)
    }

    /// Worst |det - 1| over this map's own probe grid.
    pub fn probe_max_deviation(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        self.walk_probe(|_, _, jet| {
            worst = worst.max((jet.det() - 1.0).abs());
        })?;
        Ok(worst)
    }

    fn probe(&self) -> Result<()> {
        // Track the worst determinant itself, not just the deviation, so
        // the rejection error can report the offending value.
        let mut worst: Option<([f64; 2], f64)> = None;
        self.walk_probe(|k2, k3, jet| {
            let dev = (jet.det() - 1.0).abs();
            match worst {
                Some((_, det)) if (det - 1.0).abs() >= dev => {}
                _ => worst = Some(([k2, k3], jet.det())),
            }
        })?;
        if let Some((point, det)) = worst {
            if (det - 1.0).abs() > AREA_TOL {
                return Err(Error::NotAreaPreserving {
                    point,
                    det,
                    tol: AREA_TOL,
                });
            }
        }
        Ok(())
    }

    fn walk_probe(&self, mut visit: impl FnMut(f64, f64, &PlanarJet)) -> Result<()> {
        let implicit = self.kernel.is_implicit();
        let axis = |range: [f64; 2]| {
            if implicit {
                midpoints(range[0], range[1], PROBE_RES)
            } else {
                linspace(range[0], range[1], PROBE_RES)
            }
        };
        for &k3 in &axis(self.domain.k3) {
            for &k2 in &axis(self.domain.k2) {
                let jet = self.kernel.eval(k2, k3).map_err(|e| match e {
                    e @ Error::NotAreaPreserving { .. } => e,
                    other => Error::SingularInDomain {
                        point: [k2, k3],
                        source: Box::new(other),
                    },
                })?;
                visit(k2, k3, &jet);
            }
        }
        Ok(())
    }
}

impl Kernel {
    fn is_implicit(&self) -> bool {
        match self {
            Kernel::Potential(_) => true,
            Kernel::Shear { inner, .. } => inner.is_implicit(),
            Kernel::Pair { .. } | Kernel::Circular => false,
        }
    }

    fn eval(&self, k2: f64, k3: f64) -> Result<PlanarJet> {
        match self {
            Kernel::Pair { t2, t3 } => {
                let (v2, d2, dd2) = t2.jet([k2, k3])?;
                let (v3, d3, dd3) = t3.jet([k2, k3])?;
                Ok(PlanarJet {
                    t2: Jet2 {
                        v: v2,
                        d: d2,
                        dd: dd2,
                    },
                    t3: Jet2 {
                        v: v3,
                        d: d3,
                        dd: dd3,
                    },
                })
            }
            Kernel::Potential(p) => p.eval(k2, k3),
            Kernel::Circular => circular_jet(k2, k3),
            Kernel::Shear { inner, shear } => {
                let jet = inner.eval(k2, k3)?;
                shear.apply(jet)
            }
        }
    }
}

fn circular_jet(k2: f64, k3: f64) -> Result<PlanarJet> {
    if k3 <= 0.0 {
        return Err(Error::EvalDomain {
            expr: "sqrt(2*k3)".into(),
            msg: format!("circular map needs k3 > 0, got {k3}"),
        });
    }
    let r = (2.0 * k3).sqrt();
    let (s, c) = k2.sin_cos();
    Ok(PlanarJet {
        t2: Jet2 {
            v: r * s,
            d: [r * c, s / r],
            dd: [[-r * s, c / r], [c / r, -s / (r * r * r)]],
        },
        t3: Jet2 {
            v: r * c,
            d: [-r * s, c / r],
            dd: [[-r * c, -s / r], [-s / r, -c / (r * r * r)]],
        },
    })
}

impl Shear {
    fn apply(&self, jet: PlanarJet) -> Result<PlanarJet> {
        let (base, other) = match self.axis {
            ShearAxis::T2 => (jet.t2, jet.t3),
            ShearAxis::T3 => (jet.t3, jet.t2),
        };
        let [g, dg, ddg] = self.g.jet(other.v)?;
        let mut out = Jet2 {
            v: base.v + g,
            ..base
        };
        for i in 0..2 {
            out.d[i] = base.d[i] + dg * other.d[i];
            for j in 0..2 {
                out.dd[i][j] =
                    base.dd[i][j] + ddg * other.d[i] * other.d[j] + dg * other.dd[i][j];
            }
        }
        Ok(match self.axis {
            ShearAxis::T2 => PlanarJet {
                t2: out,
                t3: jet.t3,
            },
            ShearAxis::T3 => PlanarJet {
                t2: jet.t2,
                t3: out,
            },
        })
    }
}

/// Implicit map via generating potential.  `k` is d(phi)/d(k3): solving
/// k(k3, t2) = k2 for t2 inverts the first generating relation; `t` is
/// d(phi)/d(t2), giving tau3 directly once t2 is known.  All the partials
/// of tau needed for 2-jets follow from differentiating those relations:
///
///   t2_2  = 1/k_t2                    t3_2  = t_t2 * t2_2
///   t2_3  = -k_k3 / k_t2              t3_3  = t_k3 + t_t2 * t2_3
///
/// and one more derivative layer for the second partials (see `eval`).
#[derive(Clone, Debug)]
struct PotentialKernel {
    guess: GuessStrategy,
    k: Expr,
    k_t2: Expr,
    k_k3: Expr,
    k_t2t2: Expr,
    k_t2k3: Expr,
    k_k3k3: Expr,
    t: Expr,
    t_t2: Expr,
    t_k3: Expr,
    t_t2t2: Expr,
    t_t2k3: Expr,
    t_k3k3: Expr,
}

impl PotentialKernel {
    fn new(phi: Expr, guess: GuessStrategy) -> Result<Self> {
        phi.check_variables(&["k3", "t2"])?;
        let k = phi.differentiate("k3");
        let t = phi.differentiate("t2");
        let k_t2 = k.differentiate("t2");
        let k_k3 = k.differentiate("k3");
        let t_t2 = t.differentiate("t2");
        let t_k3 = t.differentiate("k3");
        Ok(PotentialKernel {
            guess,
            k_t2t2: k_t2.differentiate("t2"),
            k_t2k3: k_t2.differentiate("k3"),
            k_k3k3: k_k3.differentiate("k3"),
            t_t2t2: t_t2.differentiate("t2"),
            t_t2k3: t_t2.differentiate("k3"),
            t_k3k3: t_k3.differentiate("k3"),
            k,
            k_t2,
            k_k3,
            t,
            t_t2,
            t_k3,
        })
    }

    /// Residual k(k3, t2) - k2 and its t2-derivative.
    fn residual(&self, k2: f64, k3: f64, t2: f64) -> Result<(f64, f64)> {
        let at = [("k3", k3), ("t2", t2)];
        Ok((self.k.eval(&at)? - k2, self.k_t2.eval(&at)?))
    }

    /// One guarded Newton run from `seed`.  Steps that leave the
    /// potential's domain or fail to shrink the residual are halved.
    fn newton(&self, k2: f64, k3: f64, seed: f64) -> Result<SolveStats> {
        let (mut res, mut slope) = self.residual(k2, k3, seed)?;
        let mut t2 = seed;
        for iter in 0..NEWTON_MAX_ITER {
            if res.abs() <= NEWTON_TOL {
                return Ok(SolveStats {
                    root: t2,
                    iterations: iter,
                });
            }
            if slope.abs() < HODOGRAPH_FLOOR {
                return Err(Error::DegenerateHodograph {
                    point: [k2, k3],
                    deriv: slope.abs(),
                });
            }
            let mut step = -res / slope;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = t2 + step;
                if let Ok((new_res, new_slope)) = self.residual(k2, k3, cand) {
                    if new_res.abs() < res.abs() {
                        t2 = cand;
                        res = new_res;
                        slope = new_slope;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
                if step.abs() <= f64::EPSILON * (1.0 + t2.abs()) {
                    break;
                }
            }
            if !accepted {
                return Err(Error::NewtonDiverged {
                    point: [k2, k3],
                    msg: format!("stalled with residual {res:e} after {iter} iterations"),
                });
            }
        }
        if res.abs() <= NEWTON_TOL {
            Ok(SolveStats {
                root: t2,
                iterations: NEWTON_MAX_ITER,
            })
        } else {
            Err(Error::NewtonDiverged {
                point: [k2, k3],
                msg: format!("residual {res:e} after {NEWTON_MAX_ITER} iterations"),
            })
        }
    }

    /// Continuation: anchor at the seed's own k2 value (an exact root by
    /// construction) and walk k2 toward the target, reseeding each leg
    /// with the previous root.  This reproduces a monotone sweep along a
    /// k3 line without per-grid state, so evaluation stays pure.
    fn continuation(&self, k2: f64, k3: f64, seed: f64, legs: usize) -> Result<SolveStats> {
        let at = [("k3", k3), ("t2", seed)];
        let anchor = self.k.eval(&at)?;
        let mut root = seed;
        let mut stats = SolveStats {
            root: seed,
            iterations: 0,
        };
        for leg in 1..=legs {
            let target = anchor + (k2 - anchor) * leg as f64 / legs as f64;
            stats = self.newton(target, k3, root)?;
            root = stats.root;
        }
        Ok(stats)
    }

    fn bisect(&self, k2: f64, k3: f64, lo: f64, hi: f64) -> Result<SolveStats> {
        let (mut lo, mut hi) = (lo, hi);
        let (mut flo, _) = self.residual(k2, k3, lo)?;
        let (fhi, _) = self.residual(k2, k3, hi)?;
        if flo == 0.0 {
            return Ok(SolveStats {
                root: lo,
                iterations: 0,
            });
        }
        if fhi == 0.0 {
            return Ok(SolveStats {
                root: hi,
                iterations: 0,
            });
        }
        if flo.signum() == fhi.signum() {
            return Err(Error::NewtonDiverged {
                point: [k2, k3],
                msg: format!("bracket [{lo}, {hi}] does not straddle the root"),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (fm, _) = self.residual(k2, k3, mid)?;
            if fm.abs() <= NEWTON_TOL || (hi - lo).abs() <= f64::EPSILON * (1.0 + mid.abs()) {
                // polish with Newton from the bisected midpoint
                return self.newton(k2, k3, mid);
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        self.newton(k2, k3, 0.5 * (lo + hi))
    }

    fn solve(&self, k2: f64, k3: f64) -> Result<SolveStats> {
        let seed = match self.guess {
            GuessStrategy::Zero => 0.0,
            GuessStrategy::Bracket(lo, hi) => 0.5 * (lo + hi),
        };
        let direct = self.newton(k2, k3, seed);
        let first_err = match direct {
            Ok(stats) => return Ok(stats),
            Err(e @ Error::DegenerateHodograph { .. }) => return Err(e),
            Err(e) => e,
        };
        for legs in [8usize, 32, 128] {
            if let Ok(stats) = self.continuation(k2, k3, seed, legs) {
                return Ok(stats);
            }
        }
        if let GuessStrategy::Bracket(lo, hi) = self.guess {
            return self.bisect(k2, k3, lo, hi);
        }
        Err(first_err)
    }

    fn eval(&self, k2: f64, k3: f64) -> Result<PlanarJet> {
        let root = self.solve(k2, k3)?.root;
        let at = [("k3", k3), ("t2", root)];
        let kp = self.k_t2.eval(&at)?;
        if kp.abs() < HODOGRAPH_FLOOR {
            return Err(Error::DegenerateHodograph {
                point: [k2, k3],
                deriv: kp.abs(),
            });
        }
        let kk = self.k_k3.eval(&at)?;
        let ktt = self.k_t2t2.eval(&at)?;
        let ktk = self.k_t2k3.eval(&at)?;
        let kkk = self.k_k3k3.eval(&at)?;

        let t2_2 = 1.0 / kp;
        let t2_3 = -kk / kp;
        let t2_22 = -ktt / (kp * kp * kp);
        let t2_23 = -(ktk + ktt * t2_3) / (kp * kp);
        let t2_33 = -((kkk + ktk * t2_3) * kp - kk * (ktk + ktt * t2_3)) / (kp * kp);

        let tv = self.t.eval(&at)?;
        let tt = self.t_t2.eval(&at)?;
        let tk = self.t_k3.eval(&at)?;
        let ttt = self.t_t2t2.eval(&at)?;
        let ttk = self.t_t2k3.eval(&at)?;
        let tkk = self.t_k3k3.eval(&at)?;

        let t3_2 = tt * t2_2;
        let t3_3 = tk + tt * t2_3;
        let t3_22 = ttt * t2_2 * t2_2 + tt * t2_22;
        let t3_23 = (ttk + ttt * t2_3) * t2_2 + tt * t2_23;
        let t3_33 = tkk + 2.0 * ttk * t2_3 + ttt * t2_3 * t2_3 + tt * t2_33;

        Ok(PlanarJet {
            t2: Jet2 {
                v: root,
                d: [t2_2, t2_3],
                dd: [[t2_22, t2_23], [t2_23, t2_33]],
            },
            t3: Jet2 {
                v: tv,
                d: [t3_2, t3_3],
                dd: [[t3_22, t3_23], [t3_23, t3_33]],
            },
        })
    }
}
