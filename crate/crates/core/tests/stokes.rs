use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swimmer_core::connection::{
    build_connection_field, displacement_line_integral, displacement_surface_integral, height_function, GaitPath,
    GridSpec, LineIntegralMode,
};
use swimmer_core::geometry::{ShapeState, SwimmerGeometry};
use swimmer_core::media::{GranularParams, Medium, ViscousParams};

fn random_loop(rng: &mut ChaCha8Rng, limit: f64) -> GaitPath {
    let a = rng.gen_range(0.05..0.2);
    let b = rng.gen_range(0.05..=a);
    let reach = limit - a - 0.02;
    let center = ShapeState::new(rng.gen_range(-reach..reach), rng.gen_range(-reach..reach));
    let path = GaitPath::ellipse(center, a, b, rng.gen_range(0.0..std::f64::consts::PI), 200, 10.0);
    if rng.gen_bool(0.5) {
        path.reversed()
    } else {
        path
    }
}

fn check_medium(medium: Medium, seed: u64) {
    let geom = SwimmerGeometry::default();
    let grid = GridSpec::default();
    let hf = height_function(&build_connection_field(&medium, &geom, &grid).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let path = random_loop(&mut rng, grid.limit);
        let line = displacement_line_integral(&path, &medium, &geom, LineIntegralMode::FirstOrder).unwrap();
        let surf = displacement_surface_integral(&path, &hf, &geom).unwrap();
        let tol = (0.02 * line.dx.abs()).max(1e-4);
        assert!(
            (surf.dx - line.dx).abs() <= tol,
            "{medium:?}: surface {} vs line {}",
            surf.dx,
            line.dx
        );
    }
}

#[test]
fn surface_matches_line_integral_viscous() {
    check_medium(Medium::Viscous(ViscousParams::default()), 7);
}

#[test]
fn surface_matches_line_integral_granular() {
    check_medium(Medium::Granular(GranularParams::default()), 11);
}

#[test]
fn rotation_row_is_exact_to_first_order() {
    let geom = SwimmerGeometry::default();
    let medium = Medium::Viscous(ViscousParams::default());
    let path = GaitPath::circle(ShapeState::new(0.1, -0.05), 0.05, 200, 10.0);
    let first = displacement_line_integral(&path, &medium, &geom, LineIntegralMode::FirstOrder).unwrap();
    let exact = displacement_line_integral(&path, &medium, &geom, LineIntegralMode::ExactSe2).unwrap();
    // Planar rotations commute, so only the translational rows see the Lie bracket.
    assert!((first.dtheta - exact.dtheta).abs() < 1e-9 * exact.dtheta.abs().max(1e-9));
    assert!(exact.dtheta.abs() > 1e-6);
}

#[test]
fn height_function_grid_refinement() {
    let geom = SwimmerGeometry::default();
    let medium = Medium::Granular(GranularParams::default());
    let path = GaitPath::circle(ShapeState::default(), 0.6, 400, 10.0);
    let coarse = GridSpec {
        resolution: 51,
        ..Default::default()
    };
    let fine = GridSpec::default();
    let d = |grid: GridSpec| {
        let hf = height_function(&build_connection_field(&medium, &geom, &grid).unwrap());
        displacement_surface_integral(&path, &hf, &geom).unwrap().dx
    };
    let (c, f) = (d(coarse), d(fine));
    assert!((c - f).abs() < 0.01 * f.abs(), "{c} vs {f}");
}
