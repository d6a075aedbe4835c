mod common;

use common::criteria::qp_oracle_gap;
use common::{brute_force_qp, dense, jittered_mesh, max_abs_diff, random_vec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellfrac::fem::{FeField, FeSpace, ModelParams};
use shellfrac::geometry::{Rect, SurfaceChart};
use shellfrac::mesh::Triangulation;
use shellfrac::solver::{qp_natural_residual, solve_phase, QpOptions};

#[test]
fn active_set_matches_enumeration_on_random_problems() {
    let gap = qp_oracle_gap(200, 5);
    assert!(gap < 1e-8, "worst gap {gap:.3e}");
}

#[test]
fn phase_solve_matches_enumeration_on_tiny_meshes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..40 {
        let chart = if k % 2 == 0 {
            SurfaceChart::flat(Rect::unit())
        } else {
            SurfaceChart::cylinder(1.0, 1.0).unwrap()
        };
        let (nx, ny) = if k % 3 == 0 { (3, 1) } else { (1, 2) };
        let mesh = jittered_mesh(chart.domain, nx, ny, 0.0, &mut rng);
        let space = FeSpace::new(&mesh, &chart).unwrap();
        let params = ModelParams {
            epsilon: rng.gen_range(0.05..0.5),
            ..ModelParams::default()
        };
        let n = mesh.n_vertices();
        let u = FeField::new(random_vec(n, -3.0, 3.0, &mut rng));
        let prev = FeField::new(random_vec(n, 0.0, 1.0, &mut rng));
        let bound = FeField::new(
            prev.values
                .iter()
                .map(|p| p * rng.gen_range(0.2..1.0))
                .collect(),
        );
        let v = solve_phase(
            &space,
            &u,
            &prev,
            &bound,
            &params,
            None,
            &QpOptions::default(),
        )
        .unwrap();
        let (h, c) = space.phase_system(&u, &prev, &params).unwrap();
        let oracle = brute_force_qp(&dense(&h), &c, &bound.values);
        let gap = max_abs_diff(&v.values, &oracle);
        assert!(gap < 1e-8, "instance {k}: gap {gap:.3e}");
    }
}

#[test]
fn sound_state_without_strain_stays_sound() {
    let mesh = Triangulation::structured_rect(Rect::unit(), 4, 4).unwrap();
    let chart = SurfaceChart::flat(Rect::unit());
    let space = FeSpace::new(&mesh, &chart).unwrap();
    let params = ModelParams {
        alpha: 0.0,
        ..ModelParams::default()
    };
    let n = mesh.n_vertices();
    let one = FeField::constant(n, 1.0);
    let v = solve_phase(
        &space,
        &FeField::constant(n, 0.0),
        &one,
        &one,
        &params,
        None,
        &QpOptions::default(),
    )
    .unwrap();
    assert!(v.values.iter().all(|x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn weak_coupling_gives_the_one_vertex_closed_form() {
    // With tiny ε the gradient coupling 2κε·K is negligible against κ/2ε, so
    // each vertex solves its own scalar problem.
    let mesh = Triangulation::structured_rect(Rect::unit(), 3, 3).unwrap();
    let chart = SurfaceChart::flat(Rect::unit());
    let space = FeSpace::new(&mesh, &chart).unwrap();
    let params = ModelParams {
        alpha: 0.0,
        epsilon: 1e-4,
        ..ModelParams::default()
    };
    let n = mesh.n_vertices();
    let u = FeField::new(mesh.vertices().iter().map(|p| 40.0 * p[0] * p[1]).collect());
    let one = FeField::constant(n, 1.0);
    let v = solve_phase(&space, &u, &one, &one, &params, None, &QpOptions::default()).unwrap();
    let w = space.strain_weights(&u).unwrap();
    let k2e = params.kappa / (2.0 * params.epsilon);
    for l in 0..n {
        let m = space.lumped_sqrt_a()[l];
        let expected = k2e * m / (w[l] + k2e * m);
        assert!(
            (v.values[l] - expected).abs() < 1e-4,
            "vertex {l}: {} vs {expected}",
            v.values[l]
        );
    }
    assert!(v.values.iter().any(|x| *x < 0.99));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn solution_satisfies_kkt_and_bounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..30);
        let h = common::random_spd(n, 0.1, &mut rng);
        let c = random_vec(n, -2.0, 2.0, &mut rng);
        let ub = random_vec(n, -1.0, 1.0, &mut rng);
        let csr = common::to_csr(&h);
        let sol = shellfrac::solver::solve_bound_qp(&csr, &c, &ub, &ub, &QpOptions::default()).unwrap();
        prop_assert!(sol.x.iter().zip(&ub).all(|(x, u)| *x <= u + 1e-12));
        let scale = shellfrac::solver::qp_scale(&csr, &c, &sol.x);
        prop_assert!(qp_natural_residual(&csr, &c, &ub, &sol.x) <= 1e-8 * scale);
    }
}
