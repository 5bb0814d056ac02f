use std::f64::consts::PI;

use swimmer_core::compliance::{
    simulate_emergent, CableScheme, CircularGait, ComplianceSpec, FourierGait, SimOptions, SuggestedGait,
};
use swimmer_core::connection::{displacement_line_integral, GaitPath, LineIntegralMode};
use swimmer_core::geometry::{ShapeState, SwimmerGeometry};
use swimmer_core::media::{GranularParams, Medium, ViscousParams};

fn granular() -> Medium {
    Medium::Granular(GranularParams::default())
}

fn viscous() -> Medium {
    Medium::Viscous(ViscousParams::default())
}

fn cable(g: f64) -> ComplianceSpec {
    ComplianceSpec::Cable(CableScheme {
        g,
        ..Default::default()
    })
}

fn circle_dx(spec: &ComplianceSpec, medium: &Medium) -> f64 {
    simulate_emergent(
        &SuggestedGait::default(),
        spec,
        medium,
        &SwimmerGeometry::default(),
        &SimOptions::default(),
    )
    .unwrap()
    .summary()
    .mean
    .dx
}

#[test]
fn rigid_circle_matches_exact_line_integral() {
    let geom = SwimmerGeometry::default();
    let gait = CircularGait::default();
    let path = GaitPath::circle(ShapeState::default(), gait.amplitude, 1000, 1.0 / gait.frequency);
    for medium in [granular(), viscous()] {
        let line = displacement_line_integral(&path, &medium, &geom, LineIntegralMode::ExactSe2).unwrap();
        let sim = circle_dx(&ComplianceSpec::Rigid, &medium);
        assert!((sim - line.dx).abs() < 0.02 * line.dx.abs(), "{sim} vs {}", line.dx);
    }
}

#[test]
fn cycles_repeat_after_the_first() {
    let traj = simulate_emergent(
        &SuggestedGait::default(),
        &cable(0.5),
        &granular(),
        &SwimmerGeometry::default(),
        &SimOptions::default(),
    )
    .unwrap();
    let d = traj.cycle_displacements();
    for c in d.iter().skip(2) {
        assert!((c.dx - d[1].dx).abs() < 1e-6 * d[1].dx.abs());
    }
    let s = traj.summary();
    assert_eq!((s.per_cycle.len(), s.discarded), (7, 2));
    assert!(s.std_dx < 1e-6 * s.mean.dx.abs());
}

#[test]
fn reciprocal_gaits_go_nowhere() {
    let geom = SwimmerGeometry::default();
    let mut line = FourierGait::zeros(10, 10.0);
    line.a1[0] = 0.8;
    line.a2[0] = -0.5;
    line.b1[2] = 0.1;
    line.b2[2] = -0.0625;
    for medium in [granular(), viscous()] {
        for spec in [ComplianceSpec::Rigid, ComplianceSpec::Constant { k: [0.5, 0.5] }] {
            let traj = simulate_emergent(
                &SuggestedGait::Fourier(line.clone()),
                &spec,
                &medium,
                &geom,
                &SimOptions::default(),
            )
            .unwrap();
            let dx = traj.summary().mean.dx;
            assert!(dx.abs() < 1e-3, "{spec:?}: {dx}");
        }
    }
}

#[test]
fn isotropic_drag_does_not_swim() {
    let iso = Medium::Viscous(ViscousParams { c_t: 1.0, c_n: 1.0 });
    assert!(circle_dx(&ComplianceSpec::Rigid, &iso).abs() < 1e-3);
    assert!(circle_dx(&ComplianceSpec::Rigid, &viscous()) > 1e-3);
}

#[test]
fn mirrored_gait_mirrors_motion() {
    let geom = SwimmerGeometry::default();
    let gait = SuggestedGait::default();
    for medium in [granular(), viscous()] {
        for spec in [ComplianceSpec::Rigid, cable(0.75)] {
            let run = |g: &SuggestedGait| {
                simulate_emergent(g, &spec, &medium, &geom, &SimOptions::default())
                    .unwrap()
                    .summary()
                    .mean
            };
            let (a, b) = (run(&gait), run(&gait.mirrored()));
            assert!((a.dx - b.dx).abs() < 1e-6);
            assert!((a.dy + b.dy).abs() < 1e-6);
            assert!((a.dtheta + b.dtheta).abs() < 1e-6);
        }
    }
}

#[test]
fn compliance_shrinks_the_emergent_loop() {
    let geom = SwimmerGeometry::default();
    let areas: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25]
        .iter()
        .map(|&g| {
            simulate_emergent(
                &SuggestedGait::default(),
                &cable(g),
                &granular(),
                &geom,
                &SimOptions::default(),
            )
            .unwrap()
            .loop_area()
        })
        .collect();
    let rigid = PI * (PI / 3.0).powi(2);
    assert!((areas[0] - rigid).abs() < 1e-3 * rigid);
    // The middle of the range is flat to within a fraction of a percent, not strictly ordered.
    for a in &areas[1..] {
        assert!(*a < areas[0]);
    }
    assert!(areas[4] < areas[1]);
    assert!(areas[5] < 0.2 * areas[0]);
}

#[test]
fn halving_the_step_barely_moves_the_result() {
    let geom = SwimmerGeometry::default();
    for g in [0.0, 1.0] {
        let run = |dt: f64| {
            let opts = SimOptions {
                dt,
                ..Default::default()
            };
            simulate_emergent(&SuggestedGait::default(), &cable(g), &granular(), &geom, &opts)
                .unwrap()
                .summary()
                .mean
                .dx
        };
        let (a, b) = (run(0.01), run(0.005));
        assert!((a - b).abs() < 0.01 * b.abs(), "G={g}: {a} vs {b}");
    }
}
