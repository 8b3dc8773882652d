//! Constructors for the constant-total-pressure flow families.
//!
//! Every family takes the split form x(k) = sigma(k1, k3) + tau(k2, k3),
//! which kills the mixed partial d2x/dk1 dk2 outright — the structural
//! reason the total pressure can be constant.  They differ in how volume
//! preservation det(dx/dk) = 1 is obtained:
//!
//! - [`build_s1`]: x = (k1 + t1(k2, k3), tau2, tau3).  The k1-tangent is
//!   (1, 0, 0), so the determinant collapses to the planar determinant of
//!   the area map supplying (tau2, tau3) — exactly, for any drift t1.
//!   The drift alone decides the flow regime: a . b = d(t1)/d(k2).
//! - [`build_s2`]: x = (k1 + F(tau3), beta(k1) + tau2, tau3), F and beta
//!   free profiles.  Their contributions cancel in the determinant
//!   expansion; a . b = F'(tau3) d(tau3)/d(k2) + beta'(k1) d(tau2)/d(k2).
//! - [`build_s3`]: x = (k1, beta(k1) + tau2, gamma(k1) + tau3);
//!   a . b = beta' d(tau2)/d(k2) + gamma' d(tau3)/d(k2).
//! - [`build_general`]: sigma and tau given component-wise in closed form.
//!   Volume preservation is *not* structural here, so the construction
//!   probe enforces it numerically.
//!
//! All constructors check that the requested box sits inside the area
//! map's validated rectangle, then walk a coarse probe grid so expression
//! domain errors (and, for the general family, volume distortion) surface
//! at build time rather than mid-computation.

use std::sync::Arc;

use crate::areamap::{AreaMap, Box2};
use crate::error::{Error, Result};
use crate::expr::{Bivariate, Expr, Univariate};
use crate::flowmap::{Box3, FlowJet, FlowKernel, FlowMap};
use crate::linalg::{linspace, midpoints, Vec3};

/// Probe-grid resolution per axis at family construction.
pub const FAMILY_PROBE_RES: usize = 5;
/// Construction rejects a map whose probe determinant strays further than
/// this from one.
pub const VOLUME_TOL: f64 = 1e-9;

/// x = (k1 + t1(k2, k3), tau2, tau3).
pub fn build_s1(t1: Expr, map: AreaMap, domain: Box3, p0: f64) -> Result<FlowMap> {
    check_coverage(&map, &domain)?;
    let implicit = map.is_implicit();
    let kernel = S1Kernel {
        t1: Bivariate::new(t1, ["k2", "k3"])?,
        map,
    };
    finish(Arc::new(kernel), domain, p0, "s1", implicit)
}

/// x = (k1 + F(tau3), beta(k1) + tau2, tau3).
pub fn build_s2(beta: Expr, f: Expr, map: AreaMap, domain: Box3, p0: f64) -> Result<FlowMap> {
    check_coverage(&map, &domain)?;
    let implicit = map.is_implicit();
    let kernel = S2Kernel {
        beta: Univariate::new(beta, "k1")?,
        f: Univariate::new(f, "t3")?,
        map,
    };
    finish(Arc::new(kernel), domain, p0, "s2", implicit)
}

/// x = (k1, beta(k1) + tau2, gamma(k1) + tau3).
pub fn build_s3(
    beta: Expr,
    gamma: Expr,
    map: AreaMap,
    domain: Box3,
    p0: f64,
) -> Result<FlowMap> {
    check_coverage(&map, &domain)?;
    let implicit = map.is_implicit();
    let kernel = S3Kernel {
        beta: Univariate::new(beta, "k1")?,
        gamma: Univariate::new(gamma, "k1")?,
        map,
    };
    finish(Arc::new(kernel), domain, p0, "s3", implicit)
}

/// x = sigma(k1, k3) + tau(k2, k3), both given component-wise.
pub fn build_general(
    sigma: [Expr; 3],
    tau: [Expr; 3],
    domain: Box3,
    p0: f64,
) -> Result<FlowMap> {
    let [s0, s1, s2] = sigma;
    let [t0, t1, t2] = tau;
    let kernel = GeneralKernel {
        sigma: [
            Bivariate::new(s0, ["k1", "k3"])?,
            Bivariate::new(s1, ["k1", "k3"])?,
            Bivariate::new(s2, ["k1", "k3"])?,
        ],
        tau: [
            Bivariate::new(t0, ["k2", "k3"])?,
            Bivariate::new(t1, ["k2", "k3"])?,
            Bivariate::new(t2, ["k2", "k3"])?,
        ],
    };
    finish(Arc::new(kernel), domain, p0, "general", false)
}

fn check_coverage(map: &AreaMap, domain: &Box3) -> Result<()> {
    let need = Box2::new(domain.k2, domain.k3);
    if !map.domain().covers(&need) {
        let show = |b: &Box2| {
            format!(
                "k2 in [{}, {}] x k3 in [{}, {}]",
                b.k2[0], b.k2[1], b.k3[0], b.k3[1]
            )
        };
        return Err(Error::DomainNotCovered {
            have: show(map.domain()),
            need: show(&need),
        });
    }
    Ok(())
}

fn finish(
    kernel: Arc<dyn FlowKernel>,
    domain: Box3,
    p0: f64,
    label: &str,
    implicit: bool,
) -> Result<FlowMap> {
    let flow = FlowMap::new(kernel, domain, p0, label);
    probe(&flow, implicit)?;
    Ok(flow)
}

/// Walk a coarse grid over the requested box, surfacing evaluation errors
/// and checking the volume element.  Implicit area maps are probed
/// cell-centred for the same reason their own probe is: the generating
/// relation may fold exactly on the box boundary.
fn probe(flow: &FlowMap, implicit: bool) -> Result<()> {
    let axis = |range: [f64; 2]| {
        if implicit {
            midpoints(range[0], range[1], FAMILY_PROBE_RES)
        } else {
            linspace(range[0], range[1], FAMILY_PROBE_RES)
        }
    };
    for &k1 in &axis(flow.domain().k1) {
        for &k2 in &axis(flow.domain().k2) {
            for &k3 in &axis(flow.domain().k3) {
                let jet = flow.jet([k1, k2, k3])?;
                let det = jet.det();
                if (det - 1.0).abs() > VOLUME_TOL {
                    return Err(Error::NotVolumePreserving {
                        point: [k1, k2, k3],
                        det,
                        tol: VOLUME_TOL,
                    });
                }
            }
        }
    }
    Ok(())
}

struct S1Kernel {
    t1: Bivariate,
    map: AreaMap,
}

impl FlowKernel for S1Kernel {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        let [k1, k2, k3] = k;
        let pj = self.map.eval_unchecked(k2, k3)?;
        let (tv, td, tdd) = self.t1.jet([k2, k3])?;
        let mut jet = FlowJet {
            x: Vec3::new(k1 + tv, pj.t2.v, pj.t3.v),
            ..FlowJet::default()
        };
        jet.first[0] = Vec3::new(1.0, 0.0, 0.0);
        jet.first[1] = Vec3::new(td[0], pj.t2.d[0], pj.t3.d[0]);
        jet.first[2] = Vec3::new(td[1], pj.t2.d[1], pj.t3.d[1]);
        for (i, j) in [(1, 1), (1, 2), (2, 2)] {
            let v = Vec3::new(
                tdd[i - 1][j - 1],
                pj.t2.dd[i - 1][j - 1],
                pj.t3.dd[i - 1][j - 1],
            );
            jet.second[i][j] = v;
            jet.second[j][i] = v;
        }
        Ok(jet)
    }
}

struct S2Kernel {
    beta: Univariate,
    /// Profile of tau3, entering the first component.
    f: Univariate,
    map: AreaMap,
}

impl FlowKernel for S2Kernel {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        let [k1, k2, k3] = k;
        let pj = self.map.eval_unchecked(k2, k3)?;
        let [bv, bd, bdd] = self.beta.jet(k1)?;
        let [fv, fd, fdd] = self.f.jet(pj.t3.v)?;
        let t2 = pj.t2;
        let t3 = pj.t3;
        let mut jet = FlowJet {
            x: Vec3::new(k1 + fv, bv + t2.v, t3.v),
            ..FlowJet::default()
        };
        jet.first[0] = Vec3::new(1.0, bd, 0.0);
        jet.first[1] = Vec3::new(fd * t3.d[0], t2.d[0], t3.d[0]);
        jet.first[2] = Vec3::new(fd * t3.d[1], t2.d[1], t3.d[1]);
        jet.second[0][0] = Vec3::new(0.0, bdd, 0.0);
        for (i, j) in [(1, 1), (1, 2), (2, 2)] {
            // chain rule for F(tau3(k2, k3)) in the first component
            let (pi, pjx) = (i - 1, j - 1);
            let v = Vec3::new(
                fdd * t3.d[pi] * t3.d[pjx] + fd * t3.dd[pi][pjx],
                t2.dd[pi][pjx],
                t3.dd[pi][pjx],
            );
            jet.second[i][j] = v;
            jet.second[j][i] = v;
        }
        Ok(jet)
    }
}

struct S3Kernel {
    beta: Univariate,
    gamma: Univariate,
    map: AreaMap,
}

impl FlowKernel for S3Kernel {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        let [k1, k2, k3] = k;
        let pj = self.map.eval_unchecked(k2, k3)?;
        let [bv, bd, bdd] = self.beta.jet(k1)?;
        let [gv, gd, gdd] = self.gamma.jet(k1)?;
        let t2 = pj.t2;
        let t3 = pj.t3;
        let mut jet = FlowJet {
            x: Vec3::new(k1, bv + t2.v, gv + t3.v),
            ..FlowJet::default()
        };
        jet.first[0] = Vec3::new(1.0, bd, gd);
        jet.first[1] = Vec3::new(0.0, t2.d[0], t3.d[0]);
        jet.first[2] = Vec3::new(0.0, t2.d[1], t3.d[1]);
        jet.second[0][0] = Vec3::new(0.0, bdd, gdd);
        for (i, j) in [(1, 1), (1, 2), (2, 2)] {
            let v = Vec3::new(0.0, t2.dd[i - 1][j - 1], t3.dd[i - 1][j - 1]);
            jet.second[i][j] = v;
            jet.second[j][i] = v;
        }
        Ok(jet)
    }
}

struct GeneralKernel {
    /// Components over (k1, k3).
    sigma: [Bivariate; 3],
    /// Components over (k2, k3).
    tau: [Bivariate; 3],
}

impl FlowKernel for GeneralKernel {
    fn jet(&self, k: [f64; 3]) -> Result<FlowJet> {
        let [k1, k2, k3] = k;
        let mut jet = FlowJet::default();
        for c in 0..3 {
            let (sv, sd, sdd) = self.sigma[c].jet([k1, k3])?;
            let (tv, td, tdd) = self.tau[c].jet([k2, k3])?;
            jet.x[c] = sv + tv;
            jet.first[0][c] = sd[0];
            jet.first[1][c] = td[0];
            jet.first[2][c] = sd[1] + td[1];
            jet.second[0][0][c] = sdd[0][0];
            jet.second[0][2][c] = sdd[0][1];
            jet.second[1][1][c] = tdd[0][0];
            jet.second[1][2][c] = tdd[0][1];
            jet.second[2][2][c] = sdd[1][1] + tdd[1][1];
        }
        jet.second[2][0] = jet.second[0][2];
        jet.second[2][1] = jet.second[1][2];
        Ok(jet)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::areamap::GuessStrategy;
    use crate::flowmap::MachRegime;

    fn parse(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn circular_map() -> AreaMap {
        AreaMap::circular(Box2::new([0.0, 2.0 * PI], [0.2, 1.5])).unwrap()
    }

    fn standard_domain() -> Box3 {
        Box3::new([0.0, 2.0 * PI], [0.0, 2.0 * PI], [0.2, 1.5])
    }

    #[test]
    fn identity_flow_is_exact() {
        let map = AreaMap::from_pair(
            parse("k2"),
            parse("k3"),
            Box2::new([0.0, 1.0], [0.0, 1.0]),
        )
        .unwrap();
        let flow = build_s1(
            parse("0"),
            map,
            Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            1.0,
        )
        .unwrap();
        let jet = flow.jet([0.3, 0.6, 0.9]).unwrap();
        assert_eq!(jet.x.0, [0.3, 0.6, 0.9]);
        assert_eq!(jet.det(), 1.0);
        assert_eq!(jet.x12().0, [0.0, 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(jet.second[i][j].0, [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn s1_determinant_is_bitwise_the_planar_determinant() {
        // With a = (1, 0, 0) the triple product reduces to the planar
        // determinant computed by the very same float operations.
        let map = circular_map();
        let flow = build_s1(parse("0.3*sin(k2)*k3"), map.clone(), standard_domain(), 1.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k2 = rng.random_range(0.0..2.0 * PI);
            let k3 = rng.random_range(0.2..1.5);
            let det = flow.jet([1.0, k2, k3]).unwrap().det();
            let planar = map.eval(k2, k3).unwrap().det();
            assert_eq!(det, planar);
        }
    }

    #[test]
    fn s1_mixed_partial_vanishes_identically() {
        let flow = build_s1(parse("cos(3*k2)+k3"), circular_map(), standard_domain(), 2.0)
            .unwrap();
        for &k in &[[0.1, 0.4, 0.3], [5.0, 6.0, 1.4], [3.0, 0.0, 0.2]] {
            let jet = flow.jet(k).unwrap();
            assert_eq!(jet.x12().0, [0.0, 0.0, 0.0]);
            assert_eq!(jet.second[0][0].0, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn s1_drift_sign_sets_the_regime() {
        for (t1, want) in [
            ("0", MachRegime::Alfvenic),
            ("k2", MachRegime::SuperAlfvenic),
            ("-k2", MachRegime::SubAlfvenic),
        ] {
            let flow =
                build_s1(parse(t1), circular_map(), standard_domain(), 1.0).unwrap();
            for &k in &[[0.0, 0.3, 0.4], [2.0, 4.0, 1.1], [6.0, 6.2, 0.9]] {
                assert_eq!(flow.regime(k).unwrap(), want, "t1 = {t1} at {k:?}");
            }
        }
    }

    #[test]
    fn s2_discriminant_matches_hand_formula() {
        // a . b = F'(tau3) d(tau3)/dk2 + beta'(k1) d(tau2)/dk2 with
        // tau = sqrt(2 k3) (sin k2, cos k2).
        let flow = build_s2(
            parse("sin(k1)"),
            parse("cos(2*t3)"),
            circular_map(),
            standard_domain(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k1: f64 = rng.random_range(0.0..2.0 * PI);
            let k2: f64 = rng.random_range(0.0..2.0 * PI);
            let k3: f64 = rng.random_range(0.2..1.5);
            let r = (2.0 * k3).sqrt();
            let want = 2.0 * r * k2.sin() * (2.0 * r * k2.cos()).sin()
                + k1.cos() * r * k2.cos();
            let got = flow.alfven_discriminant([k1, k2, k3]).unwrap();
            assert!((got - want).abs() < 1e-12, "at ({k1}, {k2}, {k3})");
        }
    }

    #[test]
    fn s2_stays_volume_preserving_and_pressure_balanced() {
        let flow = build_s2(
            parse("sin(k1)"),
            parse("cos(2*t3)"),
            circular_map(),
            standard_domain(),
            1.5,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let k = [
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.2..1.5),
            ];
            let jet = flow.jet(k).unwrap();
            assert!((jet.det() - 1.0).abs() < 1e-13);
            assert_eq!(jet.x12().0, [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn s3_discriminant_matches_hand_formula() {
        // Pair map (k2 + 0.1 sin k3, k3): d(tau2)/dk2 = 1, d(tau3)/dk2 = 0,
        // so a . b = beta'(k1) = 2 k1.
        let map = AreaMap::from_pair(
            parse("k2+0.1*sin(k3)"),
            parse("k3"),
            Box2::new([-2.0, 2.0], [-2.0, 2.0]),
        )
        .unwrap();
        let flow = build_s3(
            parse("k1^2"),
            parse("sin(k1)"),
            map,
            Box3::new([-1.0, 1.0], [-2.0, 2.0], [-2.0, 2.0]),
            1.0,
        )
        .unwrap();
        let d = flow.alfven_discriminant([0.4, 0.3, -0.7]).unwrap();
        assert!((d - 0.8).abs() < 1e-14);
        let jet = flow.jet([0.4, 0.3, -0.7]).unwrap();
        assert!((jet.det() - 1.0).abs() < 1e-14);
        assert_eq!(jet.x12().0, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn general_family_reproduces_s2_jets() {
        // The same flow written two ways: structured (hand chain rules
        // through the area map) and general (symbolic differentiation of
        // the composite closed forms).  Everything must agree.
        let s2 = build_s2(
            parse("sin(k1)"),
            parse("cos(2*t3)"),
            circular_map(),
            standard_domain(),
            1.0,
        )
        .unwrap();
        let gen = build_general(
            [parse("k1"), parse("sin(k1)"), parse("0")],
            [
                parse("cos(2*sqrt(2*k3)*cos(k2))"),
                parse("sqrt(2*k3)*sin(k2)"),
                parse("sqrt(2*k3)*cos(k2)"),
            ],
            standard_domain(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..60 {
            let k = [
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.2..1.5),
            ];
            let a = s2.jet(k).unwrap();
            let b = gen.jet(k).unwrap();
            for c in 0..3 {
                assert!((a.x[c] - b.x[c]).abs() < 1e-12);
                for i in 0..3 {
                    let scale = 1.0 + a.first[i][c].abs();
                    assert!((a.first[i][c] - b.first[i][c]).abs() < 1e-11 * scale);
                    for j in 0..3 {
                        let scale = 1.0 + a.second[i][j][c].abs();
                        assert!(
                            (a.second[i][j][c] - b.second[i][j][c]).abs() < 1e-10 * scale,
                            "second[{i}][{j}][{c}] at {k:?}: {} vs {}",
                            a.second[i][j][c],
                            b.second[i][j][c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn general_family_enforces_volume_preservation() {
        let err = build_general(
            [parse("k1"), parse("0"), parse("0")],
            [parse("0"), parse("2*k2"), parse("k3")],
            Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            1.0,
        )
        .unwrap_err();
        match err {
            Error::NotVolumePreserving { det, .. } => assert!((det - 2.0).abs() < 1e-12),
            other => panic!("expected volume rejection, got {other}"),
        }
    }

    #[test]
    fn family_probe_rejects_smuggled_bad_map() {
        // A non-area-preserving map that dodged its own construction check
        // is still caught by the family-level probe.
        let bad = AreaMap::from_pair_unchecked(
            parse("k2"),
            parse("2*k3"),
            Box2::new([0.0, 1.0], [0.0, 1.0]),
        )
        .unwrap();
        let err = build_s1(
            parse("0"),
            bad,
            Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotVolumePreserving { .. }), "{err}");
    }

    #[test]
    fn domain_coverage_is_enforced() {
        let map = AreaMap::from_pair(
            parse("k2"),
            parse("k3"),
            Box2::new([0.0, 1.0], [0.0, 1.0]),
        )
        .unwrap();
        let err = build_s1(
            parse("0"),
            map,
            Box3::new([0.0, 1.0], [0.0, 2.0], [0.0, 1.0]),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DomainNotCovered { .. }), "{err}");
    }

    #[test]
    fn family_variable_sets_are_enforced() {
        let dom = Box3::new([0.0, 1.0], [0.0, 1.0], [0.2, 1.0]);
        let map = || AreaMap::circular(Box2::new([0.0, 1.0], [0.2, 1.0])).unwrap();
        // drift may not depend on k1
        assert!(matches!(
            build_s1(parse("k1"), map(), dom, 1.0),
            Err(Error::WrongVariables { .. })
        ));
        // beta is a profile of k1 only
        assert!(matches!(
            build_s2(parse("k2"), parse("t3"), map(), dom, 1.0),
            Err(Error::WrongVariables { .. })
        ));
        // F is a profile of tau3 only
        assert!(matches!(
            build_s2(parse("k1"), parse("k3"), map(), dom, 1.0),
            Err(Error::WrongVariables { .. })
        ));
        // sigma lives on (k1, k3)
        assert!(matches!(
            build_general(
                [parse("k2"), parse("0"), parse("0")],
                [parse("0"), parse("k2"), parse("k3")],
                dom,
                1.0
            ),
            Err(Error::WrongVariables { .. })
        ));
    }

    #[test]
    fn s1_with_potential_map_probes_cell_centred() {
        // The generating relation folds exactly at k2 = +-pi/2; an
        // inclusive probe would sit on the fold and fail, a cell-centred
        // one must succeed.
        let map = AreaMap::from_potential(
            parse("0.5*t2*sqrt(2*k3-t2^2)+k3*atan(t2/sqrt(2*k3-t2^2))"),
            Box2::new([-PI / 2.0, PI / 2.0], [0.1, 2.0]),
            GuessStrategy::Zero,
        )
        .unwrap();
        let flow = build_s1(
            parse("0"),
            map,
            Box3::new([0.0, 1.0], [-PI / 2.0, PI / 2.0], [0.1, 2.0]),
            1.0,
        )
        .unwrap();
        let jet = flow.jet([0.5, 0.3, 0.9]).unwrap();
        assert!((jet.det() - 1.0).abs() < 1e-10);
    }
}
