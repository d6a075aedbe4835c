use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use proptest::prelude::*;
use shellfrac::geometry::{CustomChart, SurfaceChart};
use shellfrac::linalg::{Sym2, Vec2};

use shellfrac::geometry::Vec3;

fn charts() -> Vec<SurfaceChart> {
    vec![
        SurfaceChart::cylinder(1.0, 1.0).unwrap(),
        SurfaceChart::cylinder(2.5, 2.0)
            .unwrap()
            .with_lame(0.7, 1.3)
            .unwrap(),
        SurfaceChart::sphere(1.0, FRAC_PI_2, std::f64::consts::PI / 7.0).unwrap(),
        SurfaceChart::sphere(3.0, 1.0, 1.3)
            .unwrap()
            .with_lame(2.0, 0.5)
            .unwrap(),
    ]
}

fn point_in(chart: &SurfaceChart, a: f64, b: f64) -> Vec2 {
    let d = chart.domain;
    [d.x0 + a * d.width(), d.y0 + b * d.height()]
}

fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// First and second fundamental forms of the embedding by central differences.
fn forms_from_embedding(chart: &SurfaceChart, x: Vec2) -> (Sym2, Sym2) {
    let h = 1e-4;
    let e = |dx: f64, dy: f64| chart.embed([x[0] + dx, x[1] + dy]);
    let d1 = scale3(sub3(e(h, 0.0), e(-h, 0.0)), 0.5 / h);
    let d2 = scale3(sub3(e(0.0, h), e(0.0, -h)), 0.5 / h);
    let c = e(0.0, 0.0);
    let d11 = scale3(
        sub3(sub3(e(h, 0.0), scale3(c, 2.0)), scale3(e(-h, 0.0), -1.0)),
        1.0 / (h * h),
    );
    let d22 = scale3(
        sub3(sub3(e(0.0, h), scale3(c, 2.0)), scale3(e(0.0, -h), -1.0)),
        1.0 / (h * h),
    );
    let d12 = scale3(
        sub3(sub3(e(h, h), e(h, -h)), sub3(e(-h, h), e(-h, -h))),
        0.25 / (h * h),
    );
    let n = chart.normal(x);
    (
        Sym2::new(dot3(d1, d1), dot3(d1, d2), dot3(d2, d2)),
        Sym2::new(dot3(d11, n), dot3(d12, n), dot3(d22, n)),
    )
}

fn sym_get(s: &Sym2, i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 0) => s.xx,
        (1, 1) => s.yy,
        _ => s.xy,
    }
}

/// `c^αβστ b_αβ b_στ √a` by explicit four-index summation.
fn contracted_curvature(a_contra: &Sym2, b: &Sym2, sqrt_a: f64, lambda: f64, mu: f64) -> f64 {
    let a = |i, j| sym_get(a_contra, i, j);
    let lam = 2.0 * lambda * mu / (lambda + 2.0 * mu);
    let mut s = 0.0;
    for al in 0..2 {
        for be in 0..2 {
            for si in 0..2 {
                for ta in 0..2 {
                    let c = lam * a(al, be) * a(si, ta)
                        + mu * (a(al, si) * a(be, ta) + a(al, ta) * a(be, si));
                    s += c * sym_get(b, al, be) * sym_get(b, si, ta);
                }
            }
        }
    }
    s * sqrt_a
}

#[test]
fn thousand_points_have_positive_definite_inverse_pairs() {
    for chart in charts() {
        for i in 0..1000 {
            let x = point_in(
                &chart,
                (i as f64 * 0.618_034) % 1.0,
                (i as f64 * 0.414_214 + 0.0005) % 0.999,
            );
            let ev = chart.eval(x).unwrap();
            let e = ev.aniso.eigen();
            assert!(e.values[1] > 0.0);
            let (a, b) = (ev.a_cov, ev.a_contra);
            let prod = [
                a.xx * b.xx + a.xy * b.xy - 1.0,
                a.xx * b.xy + a.xy * b.yy,
                a.xy * b.xx + a.yy * b.xy,
                a.xy * b.xy + a.yy * b.yy - 1.0,
            ];
            assert!(prod.iter().all(|p| p.abs() < 1e-12), "{prod:?} at {x:?}");
        }
    }
}

#[test]
fn fundamental_forms_match_the_embedding() {
    for chart in charts() {
        for i in 0..50 {
            let x = point_in(
                &chart,
                0.05 + 0.9 * ((i as f64 * 0.37) % 1.0),
                0.05 + 0.9 * ((i as f64 * 0.73) % 1.0),
            );
            let ev = chart.eval(x).unwrap();
            let (a, b) = forms_from_embedding(&chart, x);
            assert!((a - ev.a_cov).max_abs() < 1e-6, "metric at {x:?}");
            assert!((b - ev.b_cov).max_abs() < 1e-5, "curvature at {x:?}");
            let c = contracted_curvature(
                &ev.a_contra,
                &ev.b_cov,
                ev.sqrt_a,
                chart.lame_lambda,
                chart.lame_mu,
            );
            assert!((c - ev.b_coeff).abs() < 1e-12 * c.abs().max(1.0));
        }
    }
}

#[test]
fn unit_sphere_equator_values() {
    let chart = SurfaceChart::sphere(1.0, FRAC_PI_2, 1.0).unwrap();
    let ev = chart.eval([0.3, 0.0]).unwrap();
    assert!((ev.a_contra - Sym2::identity()).max_abs() < 1e-15);
    assert!((ev.b_cov + Sym2::identity()).max_abs() < 1e-15);
    assert!((ev.sqrt_a - 1.0).abs() < 1e-15);
    assert!((ev.b_coeff - 4.0).abs() < 1e-14);
}

/// The unit sphere written as a custom chart, so its divergence comes from
/// finite differences.
struct SphereAgain;

impl CustomChart for SphereAgain {
    fn metric(&self, x: Vec2) -> Sym2 {
        Sym2::diag(x[1].cos().powi(2), 1.0)
    }
    fn curvature(&self, x: Vec2) -> Sym2 {
        Sym2::diag(-x[1].cos().powi(2), -1.0)
    }
    fn embed(&self, x: Vec2) -> [f64; 3] {
        [x[0].cos() * x[1].cos(), x[0].sin() * x[1].cos(), x[1].sin()]
    }
    fn normal(&self, x: Vec2) -> [f64; 3] {
        self.embed(x)
    }
    fn is_valid(&self, x: Vec2) -> bool {
        x[1].abs() < FRAC_PI_2
    }
}

#[test]
fn custom_chart_reproduces_the_shipped_sphere() {
    let sphere = SurfaceChart::sphere(1.0, FRAC_PI_2, 1.2).unwrap();
    let custom = SurfaceChart::custom(Arc::new(SphereAgain), sphere.domain);
    for i in 0..100 {
        let x = point_in(&sphere, (i as f64 * 0.11) % 1.0, (i as f64 * 0.29) % 1.0);
        let (a, b) = (sphere.eval(x).unwrap(), custom.eval(x).unwrap());
        assert!((a.div_a[0] - b.div_a[0]).abs() < 1e-6 && (a.div_a[1] - b.div_a[1]).abs() < 1e-6);
        assert!((a.b_coeff - b.b_coeff).abs() < 1e-12);
        assert!((a.aniso - b.aniso).max_abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn divergence_matches_central_differences(k in 0usize..4, a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let chart = &charts()[k];
        let x = point_in(chart, a, b);
        let h = 1e-6;
        let an = |p: Vec2| chart.eval(p).unwrap().aniso;
        let dx = (an([x[0] + h, x[1]]) - an([x[0] - h, x[1]])) * (0.5 / h);
        let dy = (an([x[0], x[1] + h]) - an([x[0], x[1] - h])) * (0.5 / h);
        let fd = [dx.xx + dy.xy, dx.xy + dy.yy];
        let div = chart.eval(x).unwrap().div_a;
        prop_assert!((fd[0] - div[0]).abs() < 1e-6 && (fd[1] - div[1]).abs() < 1e-6);
    }

    #[test]
    fn curvature_coefficient_ignores_the_first_coordinate(k in 0usize..4, a in 0.0f64..1.0, a2 in 0.0f64..1.0, b in 0.01f64..0.99) {
        let chart = &charts()[k];
        let p = chart.eval(point_in(chart, a, b)).unwrap().b_coeff;
        let q = chart.eval(point_in(chart, a2, b)).unwrap().b_coeff;
        prop_assert!((p - q).abs() <= 1e-14 * p.abs().max(1.0));
    }

    #[test]
    fn sphere_anisotropy_condition_number(y in -1.5f64..1.5) {
        let chart = SurfaceChart::sphere(1.0, FRAC_PI_2, 1.55).unwrap();
        let e = chart.eval([0.0, y]).unwrap().aniso.eigen();
        let cond = e.values[0] / e.values[1];
        let expected = 1.0 / y.cos().powi(2);
        prop_assert!((cond - expected).abs() < 1e-9 * expected);
    }
}
