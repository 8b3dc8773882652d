//! Acceptance suite: one test per release criterion, each ending in a
//! single PASS line.  Every tolerance here is part of the contract; loosen
//! nothing without revisiting the criterion it encodes.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::PathBuf;
use std::time::Instant;

use mhdflow::areamap::{AreaMap, Box2, GuessStrategy};
use mhdflow::error::Error;
use mhdflow::expr::Expr;
use mhdflow::families;
use mhdflow::flowmap::{Box3, FlowMap, MachRegime};
use mhdflow::geometry::{self, LineKind};
use mhdflow::linalg::{linspace, midpoints};
use mhdflow::scene::SceneFile;
use mhdflow::transforms::{self, CurrentSheetSpec};
use mhdflow::verify::{fd_crosscheck, verify_physical, verify_reduced, GridSpec};

/// Closed-form stream potential whose hodograph solve reproduces the
/// built-in circular map; kept verbatim in the bundled potential scene.
const CIRCULAR_POTENTIAL: &str = "0.5*t2*sqrt(2*k3-t2^2)+k3*atan(t2/sqrt(2*k3-t2^2))";

fn scene_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenes/{name}.json"))
}

fn load(name: &str) -> FlowMap {
    SceneFile::load(&scene_path(name))
        .unwrap()
        .build()
        .unwrap()
}

fn parse(src: &str) -> Expr {
    Expr::parse(src).unwrap()
}

/// The scaled-then-shifted chain used by criteria 5 and 8:
/// phi = 1 + k3, psi = sin(k3), chi = 0.
fn scaled_shifted(m: &FlowMap) -> FlowMap {
    let scaled = transforms::bogoyavlenskij(m, parse("1 + k3")).unwrap();
    transforms::translate(&scaled, parse("sin(k3)"), parse("0")).unwrap()
}

/// Label-space point of the untransformed map corresponding to `k` of the
/// transformed one: the composed reparametrization g(k).
fn chain_image(k: [f64; 3]) -> [f64; 3] {
    let phi = 1.0 + k[2];
    [phi * (k[0] + k[2].sin()), k[1] / phi, k[2]]
}

#[test]
fn acceptance_1_identity_scene_is_exact() {
    let start = Instant::now();
    let m = load("identity");
    let grid = GridSpec::cubic(21);

    let reduced = verify_reduced(&m, &grid, 1e-14).unwrap();
    assert!(reduced.pass, "reduced residuals exceed 1e-14");
    assert!(reduced.worst() <= 1e-14);
    let det = reduced
        .entries
        .iter()
        .find(|e| e.name == "det(J)-1")
        .unwrap();
    assert_eq!(det.max_abs, 0.0, "identity determinant must be exact");

    let physical = verify_physical(&m, &grid, 1e-14).unwrap();
    assert!(physical.pass, "physical residuals exceed 1e-14");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("acceptance 1 (identity scene exact, {elapsed:?}): PASS");
}

#[test]
fn acceptance_2_sheared_tube_verifies_and_surface_matches_closed_form() {
    let start = Instant::now();
    let m = load("sheared_tube");
    let grid = GridSpec::cubic(21);

    let reduced = verify_reduced(&m, &grid, 1e-8).unwrap();
    assert!(
        reduced.pass,
        "reduced residuals {:.3e} exceed 1e-8",
        reduced.worst()
    );
    let physical = verify_physical(&m, &grid, 1e-8).unwrap();
    assert!(
        physical.pass,
        "physical residuals {:.3e} exceed 1e-8",
        physical.worst()
    );

    // The k3 = 1 level set is a tube, closed in k2.  In closed form the
    // planar profile is the radius-sqrt(2) circle (t2, t3) shifted along
    // x2 by beta(k1) = sin(k1), while x1 = k1 + cos(2 t3).
    let c = 1.0;
    let mesh =
        geometry::tessellate_surface(&m, c, m.domain().k1, m.domain().k2, [33, 33]).unwrap();
    assert!(mesh.degenerate_faces.is_empty());
    let r = (2.0 * c).sqrt();
    for (vertex, &[k1, k2]) in mesh.vertices.iter().zip(&mesh.params) {
        let t2 = r * k2.sin();
        let t3 = r * k2.cos();
        assert!((vertex.0[0] - (k1 + (2.0 * t3).cos())).abs() <= 1e-12);
        assert!((vertex.0[1] - (k1.sin() + t2)).abs() <= 1e-12);
        assert!((vertex.0[2] - t3).abs() <= 1e-12);
    }
    let mut welded = mesh.clone();
    assert!(welded.weld_seam(), "full-period tube must close");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    println!("acceptance 2 (sheared tube + closed-form tube, {elapsed:?}): PASS");
}

#[test]
fn acceptance_3_potential_solve_matches_circular_map() {
    let dom = Box2::new([-FRAC_PI_2, FRAC_PI_2], [0.1, 2.0]);
    let potential =
        AreaMap::from_potential(parse(CIRCULAR_POTENTIAL), dom, GuessStrategy::Zero).unwrap();
    let circular = AreaMap::circular(dom).unwrap();

    // Cell-centered 50 x 50 grid: 2500 points.  Cell centers rather than
    // box corners because the hodograph folds exactly at k2 = +-pi/2,
    // where no finite-precision solve can hold the full tolerance.
    let mut worst = 0.0f64;
    let mut max_iters = 0usize;
    for &k3 in &midpoints(dom.k3[0], dom.k3[1], 50) {
        for &k2 in &midpoints(dom.k2[0], dom.k2[1], 50) {
            let got = potential.eval(k2, k3).unwrap();
            let want = circular.eval(k2, k3).unwrap();
            worst = worst
                .max((got.t2.v - want.t2.v).abs())
                .max((got.t3.v - want.t3.v).abs());
            let stats = potential
                .solve_stats(k2, k3)
                .unwrap()
                .expect("potential mode always solves");
            max_iters = max_iters.max(stats.iterations);
        }
    }
    assert!(worst <= 1e-10, "worst deviation {worst:.3e} exceeds 1e-10");
    assert!(max_iters <= 10, "Newton took {max_iters} > 10 iterations");
    println!(
        "acceptance 3 (potential matches circular, worst {worst:.3e}, <= {max_iters} iters): PASS"
    );
}

#[test]
fn acceptance_4_area_preservation_probe_and_rejection() {
    let maps = [
        (
            "pair identity",
            AreaMap::from_pair(parse("k2"), parse("k3"), Box2::new([0.0, 1.0], [0.0, 1.0])),
        ),
        (
            "circular",
            AreaMap::circular(Box2::new([0.0, TAU], [0.2, 1.5])),
        ),
        (
            "potential",
            AreaMap::from_potential(
                parse(CIRCULAR_POTENTIAL),
                Box2::new([-1.3, 1.3], [0.3, 1.8]),
                GuessStrategy::Zero,
            ),
        ),
        (
            "sheared pair",
            AreaMap::from_pair(
                parse("k2 + 0.1*sin(k3)"),
                parse("k3"),
                Box2::new([-1.0, 1.0], [-1.0, 1.0]),
            )
            .and_then(|map| map.with_shear(mhdflow::areamap::ShearAxis::T3, parse("0.3*t2"))),
        ),
    ];
    for (name, map) in maps {
        let map = map.unwrap_or_else(|e| panic!("{name}: {e}"));
        let dev = map.probe_max_deviation().unwrap();
        assert!(dev < 1e-9, "{name}: |det - 1| = {dev:.3e} on probe");
    }

    // Corrupted radial coordinate: 2 k3 cos(k2) instead of
    // sqrt(2 k3) cos(k2) is not area-preserving and must never construct.
    let broken = AreaMap::from_pair(
        parse("sqrt(2*k3)*sin(k2)"),
        parse("2*k3*cos(k2)"),
        Box2::new([0.0, TAU], [0.2, 1.5]),
    );
    assert!(
        matches!(broken, Err(Error::NotAreaPreserving { .. })),
        "broken map was not rejected: {broken:?}"
    );
    println!("acceptance 4 (area probe 1e-9 + rejection at construction): PASS");
}

#[test]
fn acceptance_5_transforms_preserve_solution_structure() {
    let m = load("sheared_tube");
    let mt = scaled_shifted(&m);

    // Still an exact solution at the standard gate.
    let grid = GridSpec::cubic(21);
    let reduced = verify_reduced(&mt, &grid, 1e-8).unwrap();
    assert!(reduced.pass, "transformed flow fails reduced check");
    let physical = verify_physical(&mt, &grid, 1e-8).unwrap();
    assert!(physical.pass, "transformed flow fails physical check");

    // Total pressure is untouched.
    assert_eq!(mt.total_pressure(), m.total_pressure());

    // The discriminant a . b is a pointwise invariant: compare at points
    // paired by the reparametrization.  The window keeps every image
    // g(k) inside the untransformed domain.
    let dom = m.domain();
    let mut worst = 0.0f64;
    for &k1 in &linspace(0.0, 1.5, 6) {
        for &k2 in &linspace(0.0, TAU, 6) {
            for &k3 in &linspace(0.2, 1.5, 6) {
                let k = [k1, k2, k3];
                let image = chain_image(k);
                assert!(dom.contains(image), "window leaked outside the domain");
                let got = mt.alfven_discriminant(k).unwrap();
                let want = m.alfven_discriminant(image).unwrap();
                worst = worst.max((got - want).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "a.b drifts by {worst:.3e} under transform");

    // Both parametrizations describe the same k3 = c surface: transformed
    // vertices coincide with the base map evaluated at the paired labels.
    let c = 1.0;
    let mesh = geometry::tessellate_surface(&mt, c, [0.0, 1.5], [0.0, TAU], [9, 9]).unwrap();
    let mut worst_x = 0.0f64;
    for (vertex, &[k1, k2]) in mesh.vertices.iter().zip(&mesh.params) {
        let base = m.position(chain_image([k1, k2, c])).unwrap();
        worst_x = worst_x.max((*vertex - base).norm());
    }
    assert!(
        worst_x <= 1e-12,
        "level-set points separate by {worst_x:.3e}"
    );
    println!(
        "acceptance 5 (transforms preserve P, a.b to {worst:.3e}, level sets to {worst_x:.3e}): PASS"
    );
}

#[test]
fn acceptance_6_current_sheet_formula_matches_field_jump() {
    let scene = SceneFile::load(&scene_path("current_sheet")).unwrap();
    let m = scene.build().unwrap();
    let block = scene.current_sheet.expect("scene bundles a sheet block");
    let spec = CurrentSheetSpec {
        c: block.c,
        phi_minus: block.phi_minus,
        phi_plus: block.phi_plus,
        res: block.res,
    };

    let sheet = transforms::current_sheet(&m, &spec).unwrap();
    let oracle = transforms::current_sheet_oracle(&m, &spec).unwrap();
    assert_eq!(sheet.len(), 1024);
    assert_eq!(sheet.len(), oracle.len());
    let mut worst_dev = 0.0f64;
    let mut worst_tangency = 0.0f64;
    for (s, o) in sheet.iter().zip(&oracle) {
        worst_dev = worst_dev.max((s.j - o.j).norm());
        worst_tangency = worst_tangency.max(s.j.dot(s.n).abs());
    }
    assert!(
        worst_dev <= 1e-12,
        "jump formula deviates from the field-discontinuity oracle by {worst_dev:.3e}"
    );
    assert!(
        worst_tangency <= 1e-12,
        "current acquires a normal component {worst_tangency:.3e}"
    );

    // As the jump closes the sheet current dies off linearly: halving
    // phi+ - 1 halves max |J|, and max |J| / (phi+ - 1) stays bounded.
    let max_j = |phi_plus: f64| -> f64 {
        let spec = CurrentSheetSpec { phi_plus, ..spec };
        transforms::current_sheet(&m, &spec)
            .unwrap()
            .iter()
            .map(|s| s.j.norm())
            .fold(0.0, f64::max)
    };
    let gaps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
    let peaks: Vec<f64> = gaps.iter().map(|g| max_j(1.0 + g)).collect();
    for (gap, peak) in gaps.iter().zip(&peaks) {
        let slope = peak / gap;
        assert!(
            (0.5..0.8).contains(&slope),
            "max |J| / (phi+ - 1) = {slope:.3} left the linear band"
        );
    }
    for pair in peaks.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!(
            (0.45..0.6).contains(&ratio),
            "halving the jump scaled max |J| by {ratio:.3}, not ~0.5"
        );
    }
    println!(
        "acceptance 6 (sheet formula vs oracle {worst_dev:.3e}, tangent to {worst_tangency:.3e}, linear decay): PASS"
    );
}

#[test]
fn acceptance_7_tangent_convergence_on_random_seeds() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);

    let m = load("sheared_tube");
    let coarse = 17usize; // ds = 1/32
    let fine = 33usize; // ds halved
    let s_range = [0.0, 0.5];
    let ds = |n: usize| (s_range[1] - s_range[0]) / (n - 1) as f64;

    for trial in 0..100 {
        let k0 = [
            rng.random_range(0.3..TAU - 0.3),
            rng.random_range(0.3..TAU - 0.3),
            rng.random_range(0.25..1.45),
        ];
        for kind in [LineKind::Streamline, LineKind::Magnetic] {
            let line1 = geometry::field_line(&m, kind, k0, s_range, coarse).unwrap();
            let line2 = geometry::field_line(&m, kind, k0, s_range, fine).unwrap();
            assert!(!line1.truncated && !line2.truncated, "seed drifted outside");
            let err1 = geometry::tangency_error(&m, &line1).unwrap();
            let err2 = geometry::tangency_error(&m, &line2).unwrap();
            if err2 < 1e-13 {
                continue; // line is locally straight; nothing to compare
            }
            let c1 = err1 / ds(coarse).powi(2);
            let c2 = err2 / ds(fine).powi(2);
            let drift = c2 / c1;
            assert!(
                (0.25..=4.0).contains(&drift),
                "trial {trial} {kind:?}: constant drifted by {drift:.3} under step halving \
                 (err {err1:.3e} -> {err2:.3e})"
            );
        }
    }
    println!("acceptance 7 (100 random seeds, tangent error ~ C ds^2, C stable within 4x): PASS");
}

#[test]
fn acceptance_8_drift_profile_sets_regime_and_transforms_keep_it() {
    let cases = [
        ("0", MachRegime::Alfvenic),
        ("k2", MachRegime::SuperAlfvenic),
        ("-k2", MachRegime::SubAlfvenic),
    ];
    let grid = GridSpec::cubic(5);
    for (t1, expected) in cases {
        let map = AreaMap::from_pair(parse("k2"), parse("k3"), Box2::new([0.0, 1.0], [0.0, 1.0]))
            .unwrap();
        let dom = Box3::new([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]);
        let m = families::build_s1(parse(t1), map, dom, 0.0).unwrap();
        for sample in geometry::classify_grid(&m, &grid).unwrap() {
            assert_eq!(
                sample.regime, expected,
                "t1 = {t1} at {:?}: a.b = {}",
                sample.k, sample.discriminant
            );
        }
        // The scaling/shift chain preserves a . b, hence the regime.
        let mt = scaled_shifted(&m);
        for sample in geometry::classify_grid(&mt, &grid).unwrap() {
            assert_eq!(
                sample.regime, expected,
                "transformed t1 = {t1} at {:?}: a.b = {}",
                sample.k, sample.discriminant
            );
        }
    }
    println!("acceptance 8 (drift profile sets regime; invariant under transforms): PASS");
}

#[test]
fn acceptance_9_fd_crosscheck_every_bundled_scene() {
    let names = [
        "identity",
        "cylinder",
        "sheared_tube",
        "current_sheet",
        "potential",
        "s3_channel",
    ];
    let mut summary = Vec::new();
    for name in names {
        let m = load(name);
        let report = fd_crosscheck(&m, &GridSpec::cubic(7), 1e-5, 1e-6).unwrap();
        assert!(
            report.pass,
            "{name}: analytic jets deviate from finite differences by {:.3e}",
            report.worst()
        );
        summary.push(format!("{name} {:.1e}", report.worst()));
    }
    println!(
        "acceptance 9 (fd crosscheck < 1e-6 on all bundled scenes: {}): PASS",
        summary.join(", ")
    );
}
