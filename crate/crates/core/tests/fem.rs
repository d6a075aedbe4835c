mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellfrac::fem::{
    assemble_displacement_system, interpolate, DirichletData, FeField, FeSpace, ModelParams,
};
use shellfrac::geometry::{Rect, SurfaceChart};
use shellfrac::mesh::Triangulation;

fn params() -> ModelParams {
    ModelParams::default()
}

#[test]
fn constant_states_have_closed_form_energies() {
    let chart = SurfaceChart::flat(Rect::unit());
    let mesh = Triangulation::structured_rect(Rect::unit(), 7, 5).unwrap();
    let s = FeSpace::new(&mesh, &chart).unwrap();
    let n = mesh.n_vertices();
    let p = params();
    let sound = s
        .energy(
            &FeField::constant(n, 0.0),
            &FeField::constant(n, 1.0),
            None,
            &p,
        )
        .unwrap();
    assert_eq!((sound.elastic, sound.dissipation), (0.0, 0.0));
    let broken = s
        .energy(
            &FeField::constant(n, 0.0),
            &FeField::constant(n, 0.0),
            None,
            &p,
        )
        .unwrap();
    assert!((broken.dissipation - 50.0).abs() < 1e-12 * 50.0);

    let cyl = SurfaceChart::cylinder(1.0, 1.0).unwrap();
    let mesh = Triangulation::structured_rect(cyl.domain, 9, 4).unwrap();
    let s = FeSpace::new(&mesh, &cyl).unwrap();
    let n = mesh.n_vertices();
    let e = s
        .energy(
            &FeField::constant(n, 1.0),
            &FeField::constant(n, 1.0),
            None,
            &p,
        )
        .unwrap();
    assert!((e.elastic - PI).abs() < 1e-12 * PI);
    assert!((e.total - e.elastic - e.dissipation).abs() <= 1e-14 * e.total.abs());
}

#[test]
fn affine_interpolant_is_exact_at_barycenters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mesh = common::jittered_mesh(Rect::unit(), 6, 6, 0.25, &mut rng);
    let f = |p: [f64; 2]| 0.3 - 1.7 * p[0] + 2.2 * p[1];
    let w = interpolate(&mesh, f).unwrap();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle(t);
        let mean = tri.iter().map(|&i| w.values[i]).sum::<f64>() / 3.0;
        assert!((mean - f(mesh.centroid(t))).abs() < 1e-14);
    }
}

#[test]
fn nan_data_is_rejected() {
    let mesh = Triangulation::structured_rect(Rect::unit(), 2, 2).unwrap();
    assert!(interpolate(&mesh, |p| if p[0] > 0.9 { f64::NAN } else { 0.0 }).is_err());
}

#[test]
fn displacement_matrix_limits() {
    let chart = SurfaceChart::flat(Rect::unit());
    let mesh = Triangulation::structured_rect(Rect::unit(), 4, 4).unwrap();
    let s = FeSpace::new(&mesh, &chart).unwrap();
    let n = mesh.n_vertices();
    let p = params();
    let k = common::dense(&s.stiffness());
    let full = common::dense(
        &s.displacement_matrix(&FeField::constant(n, 1.0), &p)
            .unwrap(),
    );
    let empty = common::dense(
        &s.displacement_matrix(&FeField::constant(n, 0.0), &p)
            .unwrap(),
    );
    assert!((&full - &k * (1.0 + p.eta)).abs().max() < 1e-13);
    assert!((&empty - &k * p.eta).abs().max() < 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn constrained_displacement_systems_are_spd(seed in any::<u64>(), cylinder in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = if cylinder { SurfaceChart::cylinder(1.0, 1.0).unwrap() } else { SurfaceChart::flat(Rect::unit()) };
        let mesh = common::jittered_mesh(chart.domain, 5, 4, 0.25, &mut rng);
        let s = FeSpace::new(&mesh, &chart).unwrap();
        let n = mesh.n_vertices();
        let v = FeField::new(common::random_vec(n, 0.0, 1.0, &mut rng));
        let mut d = DirichletData::none(n);
        d.values[0] = Some(rng.gen_range(-1.0..1.0));
        let (k, _) = assemble_displacement_system(&s, &v, &d, &params()).unwrap();
        let kd = common::dense(&k);
        prop_assert!((&kd - kd.transpose()).abs().max() <= 1e-14 * kd.abs().max());
        prop_assert!(kd.clone().cholesky().is_some());
    }

    #[test]
    fn phase_hessian_is_symmetric_positive_definite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = SurfaceChart::cylinder(1.0, 1.0).unwrap();
        let mesh = common::jittered_mesh(chart.domain, 4, 4, 0.25, &mut rng);
        let s = FeSpace::new(&mesh, &chart).unwrap();
        let n = mesh.n_vertices();
        let u = FeField::new(common::random_vec(n, -1.0, 1.0, &mut rng));
        let prev = FeField::new(common::random_vec(n, 0.0, 1.0, &mut rng));
        let p = ModelParams { alpha: rng.gen_range(0.0..1.0), ..params() };
        let (h, _) = s.phase_system(&u, &prev, &p).unwrap();
        let hd = common::dense(&h);
        prop_assert!((&hd - hd.transpose()).abs().max() <= 1e-14 * hd.abs().max());
        prop_assert!(hd.clone().cholesky().is_some());
        // Zeroth-order part: H minus the scaled stiffness is diagonal.
        let k = common::dense(&s.stiffness()) * (2.0 * p.kappa * p.epsilon);
        let z = hd - k;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    prop_assert!(z[(i, j)].abs() <= 1e-12 * z[(i, i)].abs());
                }
            }
        }
    }

    #[test]
    fn lumped_energies_of_nodal_zero_one_states(seed in any::<u64>()) {
        // With v ∈ {0, 1} nodally, (1 − v)² = 1 − v and the lumped
        // dissipation's zeroth-order part equals the lumped integral of 1 − v.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = SurfaceChart::flat(Rect::unit());
        let mesh = common::jittered_mesh(Rect::unit(), 4, 4, 0.25, &mut rng);
        let s = FeSpace::new(&mesh, &chart).unwrap();
        let n = mesh.n_vertices();
        let v = FeField::new((0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect());
        let p = params();
        let kv = s.stiffness().mul_vec(&v.values);
        let grad_part = p.kappa * p.epsilon * kv.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>();
        let zero: f64 = (0..n).map(|l| s.lumped_mass()[l] * (1.0 - v.values[l])).sum::<f64>() * p.kappa / (4.0 * p.epsilon);
        let d = s.dissipation(&v, &p).unwrap();
        prop_assert!((d - zero - grad_part).abs() <= 1e-12 * d.max(1.0));
    }
}

#[test]
fn optimal_profile_measures_the_segment_length() {
    // The profile integrates to 1 per unit length plus πε/2 at each end.
    for eps in [5e-3, 1e-2] {
        let l = common::criteria::at_crack_length(eps, eps / 2.5);
        assert!((l - 1.0 - PI * eps).abs() < 0.05, "ε = {eps}: {l}");
    }
}
