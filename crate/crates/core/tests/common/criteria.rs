//! Acceptance measurements shared by the property suites and the acceptance
//! target. Each returns the measured quantity; the callers apply thresholds.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellfrac::adaptation::{optimal_lengths, optimal_shape, upsilon, GammaMatrix};
use shellfrac::fem::{FeField, FeSpace, ModelParams};
use shellfrac::geometry::{Rect, SurfaceChart};
use shellfrac::linalg::Sym2;
use shellfrac::mesh::REFERENCE_AREA;
use shellfrac::solver::{solve_bound_qp, QpOptions};

use super::{brute_force_qp, jittered_mesh, max_abs_diff, random_spd, random_vec, to_csr};

fn rel_err(analytic: f64, fd: f64, scale: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-9 * scale)
}

/// Worst relative mismatch between assembled directional derivatives and
/// central differences of the energies, over `meshes` random meshes (half on
/// the flat chart, half on the unit cylinder) and `dirs` directions each.
pub fn gradient_consistency(meshes: usize, dirs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..meshes {
        let chart = if k % 2 == 0 {
            SurfaceChart::flat(Rect::unit())
        } else {
            SurfaceChart::cylinder(1.0, 1.0).unwrap()
        };
        let (nx, ny) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let mesh = jittered_mesh(chart.domain, nx, ny, 0.25, &mut rng);
        assert!(mesh.n_vertices() <= 60);
        let space = FeSpace::new(&mesh, &chart).unwrap();
        let params = ModelParams {
            epsilon: rng.gen_range(0.02..0.2),
            alpha: rng.gen_range(0.0..1.0),
            tau: 0.1,
            ..ModelParams::default()
        };
        let n = mesh.n_vertices();
        let u = FeField::new(random_vec(n, -1.0, 1.0, &mut rng));
        let prev = FeField::new(random_vec(n, 0.5, 1.0, &mut rng));
        let v = FeField::new(
            prev.values
                .iter()
                .map(|p| p * rng.gen_range(0.0..1.0))
                .collect(),
        );
        let gu = space.grad_u(&u, &v, &params).unwrap();
        let gv = space.grad_v(&u, &v, &prev, &params).unwrap();
        let e0 = space.energy(&u, &v, Some(&prev), &params).unwrap().total;
        for _ in 0..dirs {
            let d = random_vec(n, -1.0, 1.0, &mut rng);
            let shift = |w: &FeField, s: f64| {
                FeField::new(w.values.iter().zip(&d).map(|(a, b)| a + s * b).collect())
            };
            let eu = |w: &FeField| space.elastic(w, &v, &params).unwrap();
            let fd_u = (eu(&shift(&u, delta)) - eu(&shift(&u, -delta))) / (2.0 * delta);
            let an_u: f64 = gu.iter().zip(&d).map(|(a, b)| a * b).sum();
            let ev = |w: &FeField| space.energy(&u, w, Some(&prev), &params).unwrap().total;
            let fd_v = (ev(&shift(&v, delta)) - ev(&shift(&v, -delta))) / (2.0 * delta);
            let an_v: f64 = gv.iter().zip(&d).map(|(a, b)| a * b).sum();
            worst = worst
                .max(rel_err(an_u, fd_u, e0))
                .max(rel_err(an_v, fd_v, e0));
        }
    }
    worst
}

/// Worst sup-norm gap between the active-set QP solver and exhaustive
/// enumeration over `instances` random problems with at most 8 unknowns.
pub fn qp_oracle_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.gen_range(1..=8);
        let h = random_spd(n, rng.gen_range(0.01..1.0), &mut rng);
        let c = random_vec(n, -2.0, 2.0, &mut rng);
        let ub = random_vec(n, -1.0, 1.0, &mut rng);
        let x0 = random_vec(n, -3.0, 1.0, &mut rng);
        let sol = solve_bound_qp(&to_csr(&h), &c, &ub, &x0, &QpOptions::default()).unwrap();
        worst = worst.max(max_abs_diff(&sol.x, &brute_force_qp(&h, &c, &ub)));
    }
    worst
}

/// Random symmetric positive semidefinite 2×2 matrix with a wide spread of
/// eigenvalue ratios.
pub fn random_gamma(rng: &mut impl Rng) -> Sym2 {
    let t1 = 10f64.powf(rng.gen_range(-3.0..3.0));
    let t2 = t1 * 10f64.powf(rng.gen_range(-6.0..0.0));
    let phi = rng.gen_range(0.0..std::f64::consts::PI);
    let (c, s) = (phi.cos(), phi.sin());
    Sym2::from_eigen([t1, t2], [[c, s], [-s, c]])
}

/// Measured optimality of the analytic shape and of the equidistributed
/// lengths.
#[derive(Clone, Copy, Debug)]
pub struct MetricOptimality {
    /// Largest `Υ(s*, r*) − Υ(s, r)` over the random samples, relative to `Υ(s*, r*)`.
    pub worst_excess: f64,
    /// Largest relative defect of `s* = σ*₁/σ*₂` and `|T̂|(σ*₁σ*₂)^{3/2} Υ(s*, r*) = tol/n`.
    pub worst_identity: f64,
}

pub fn metric_optimality(matrices: usize, samples: usize, seed: u64) -> MetricOptimality {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricOptimality {
        worst_excess: f64::NEG_INFINITY,
        worst_identity: 0.0,
    };
    for _ in 0..matrices {
        let gamma = random_gamma(&mut rng);
        let g = GammaMatrix::from_matrix(gamma);
        let (s_star, r_star) = optimal_shape(&g);
        let best = upsilon(&gamma, s_star, r_star);
        for _ in 0..samples {
            let s = 10f64.powf(rng.gen_range(0.0..4.0));
            let phi = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
            let other = upsilon(&gamma, s, [phi.cos(), phi.sin()]);
            out.worst_excess = out.worst_excess.max((best - other) / best);
        }
        let tol = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let n = rng.gen_range(1..100_000);
        let (s1, s2) = optimal_lengths(&g, tol, n);
        let ratio = ((s1 / s2) - s_star).abs() / s_star;
        let equi = REFERENCE_AREA * (s1 * s2).powf(1.5) * best;
        let target = tol / n as f64;
        out.worst_identity = out
            .worst_identity
            .max(ratio)
            .max((equi - target).abs() / target);
    }
    out
}

/// The cylinder desk scenario: length 1, initial size 0.05, `TOL = 10⁻²`,
/// `τ = 2·10⁻²`, otherwise default parameters.
pub fn desk_spec() -> shellfrac::driver::ScenarioSpec {
    let mut spec = shellfrac::driver::ScenarioSpec::cylinder(1.0);
    spec.params.tol = 1e-2;
    spec.params.tau = 2e-2;
    spec.final_time = 2.3;
    spec.target_h = 0.05;
    spec
}

/// Measured descent and stationarity of the alternating minimization.
#[derive(Clone, Copy, Debug)]
pub struct DescentCheck {
    /// Largest `(trace[j] − trace[j−1]) / |trace[j−1]|` over all sweeps.
    pub worst_increase: f64,
    /// Largest critical-point residual divided by its scale at the end of a step.
    pub worst_residual: f64,
    pub sweeps: usize,
    /// Steps in which the phase field moved by more than `10⁻³`.
    pub active_steps: usize,
}

/// Runs the desk scenario to `t = (start − 1)τ` and then takes `steps`
/// further steps on that mesh, iterating each step to a critical point.
pub fn altmin_descent(start: usize, steps: usize) -> DescentCheck {
    use shellfrac::driver::{dirichlet_data, run_with, RunOptions};
    use shellfrac::solver::{alternate_minimize, AltMinOptions};
    let spec = desk_spec();
    let summary = run_with(
        &spec,
        &RunOptions {
            max_steps: Some(start),
            checkpoint_dir: None,
        },
        |_, _| Ok(()),
    )
    .unwrap();
    let chart = spec.surface().unwrap();
    let params = spec.params.model();
    let state = summary.state;
    let space = FeSpace::new(&state.mesh, &chart).unwrap();
    let opts = AltMinOptions {
        tol_v: 1e-9,
        max_sweeps: 2000,
        require_kkt: true,
        kkt_tol: 1e-6,
        ..AltMinOptions::default()
    };
    let (mut u, mut prev) = (state.u, state.v);
    let mut out = DescentCheck {
        worst_increase: f64::NEG_INFINITY,
        worst_residual: 0.0,
        sweeps: 0,
        active_steps: 0,
    };
    for i in start..start + steps {
        let g = dirichlet_data(&state.mesh, i as f64 * spec.params.tau).unwrap();
        let res = alternate_minimize(&space, &u, &prev, &prev, &g, &params, &opts).unwrap();
        for w in res.energy_trace.windows(2) {
            out.worst_increase = out.worst_increase.max((w[1] - w[0]) / w[0].abs());
        }
        out.worst_residual = out
            .worst_residual
            .max(res.residual.max() / res.residual.scale);
        out.sweeps += res.iterations;
        if res.v.max_abs_diff(&prev) > 1e-3 {
            out.active_steps += 1;
        }
        u = res.u;
        prev = res.v;
    }
    out
}

/// Measured conformance of a mesh generated for a constant metric.
#[derive(Clone, Copy, Debug)]
pub struct RemeshCheck {
    /// Fraction of edges with length in `[1/√2, √2]` under `M/3` (the
    /// reference triangle has edges of length √3 under `M`).
    pub fraction_in_range: f64,
    pub mean_aspect_ratio: f64,
    /// Median angle in degrees between each element's stretching direction
    /// and the prescribed long axis.
    pub median_deviation: f64,
    pub n_triangles: usize,
    pub seconds: f64,
}

/// Remeshes the unit square for the constant metric with sizes `long` along
/// x and `short` along y.
pub fn remesh_conformance(long: f64, short: f64) -> RemeshCheck {
    use shellfrac::adaptation::{remesh, Features, MetricField, RemeshOptions};
    use shellfrac::linalg::{dot, sub};
    use shellfrac::mesh::Triangulation;
    let old = Triangulation::structured_rect(Rect::unit(), 10, 10).unwrap();
    let m = Sym2::diag(long.powi(-2), short.powi(-2));
    let start = std::time::Instant::now();
    let (mesh, _) = remesh(
        &MetricField::constant(&old, m),
        &old,
        &Features::default(),
        &RemeshOptions::default(),
    )
    .unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let scaled = m * (1.0 / 3.0);
    let lens: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|e| {
            let d = sub(mesh.vertex(e.v[1]), mesh.vertex(e.v[0]));
            dot(d, scaled.apply(d)).sqrt()
        })
        .collect();
    let inside = lens
        .iter()
        .filter(|l| (std::f64::consts::FRAC_1_SQRT_2..=std::f64::consts::SQRT_2).contains(*l))
        .count();
    let mut dev = Vec::new();
    let mut aspect = 0.0;
    for t in 0..mesh.n_triangles() {
        let em = mesh.element_map(t).unwrap();
        aspect += em.aspect_ratio;
        dev.push(em.r[0][1].abs().min(1.0).asin().to_degrees());
    }
    dev.sort_by(f64::total_cmp);
    RemeshCheck {
        fraction_in_range: inside as f64 / lens.len() as f64,
        mean_aspect_ratio: aspect / mesh.n_triangles() as f64,
        median_deviation: dev[dev.len() / 2],
        n_triangles: mesh.n_triangles(),
        seconds,
    }
}

/// Whether the vertex set `{v < level}` connects the top edge `y = top` with
/// the disc of radius `reach` around `tip` through mesh edges.
pub fn band_connects(
    state: &shellfrac::driver::State,
    level: f64,
    top: f64,
    tip: [f64; 2],
    reach: f64,
) -> bool {
    let mesh = &state.mesh;
    let low = |i: usize| state.v.values[i] < level;
    let mut seen = vec![false; mesh.n_vertices()];
    let mut stack: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&i| low(i) && (mesh.vertex(i)[1] - top).abs() < 1e-9)
        .collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        let p = mesh.vertex(i);
        if (p[0] - tip[0]).hypot(p[1] - tip[1]) <= reach {
            return true;
        }
        for j in mesh.vertex_neighbors(i) {
            if !seen[j] && low(j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    false
}

/// Vertices with `v < level` strictly above the line `y = above`.
pub fn damaged_above(state: &shellfrac::driver::State, level: f64, above: f64) -> Vec<[f64; 2]> {
    (0..state.mesh.n_vertices())
        .filter(|&i| state.v.values[i] < level && state.mesh.vertex(i)[1] > above)
        .map(|i| state.mesh.vertex(i))
        .collect()
}

/// Concentration of stretched elements on the crack.
#[derive(Clone, Copy, Debug)]
pub struct Concentration {
    pub stretched: usize,
    /// Fraction of elements with aspect ratio above 3 that touch `{v < 0.1}`.
    pub stretched_on_crack: f64,
    /// Fraction of elements with aspect ratio above 3 that touch `{v < 0.99}`.
    pub stretched_in_band: f64,
    pub n_triangles: usize,
    /// Equilateral triangles of edge `ε` needed to tile the meshed region.
    pub uniform_reference: f64,
}

pub fn concentration(state: &shellfrac::driver::State, epsilon: f64) -> Concentration {
    let mesh = &state.mesh;
    let (mut stretched, mut on, mut band) = (0, 0, 0);
    for t in 0..mesh.n_triangles() {
        if mesh.element_map(t).unwrap().aspect_ratio <= 3.0 {
            continue;
        }
        stretched += 1;
        let v = mesh
            .triangle(t)
            .map(|i| state.v.values[i])
            .into_iter()
            .fold(1.0, f64::min);
        on += usize::from(v < 0.1);
        band += usize::from(v < 0.99);
    }
    Concentration {
        stretched,
        stretched_on_crack: on as f64 / stretched.max(1) as f64,
        stretched_in_band: band as f64 / stretched.max(1) as f64,
        n_triangles: mesh.n_triangles(),
        uniform_reference: mesh.total_area() / (3f64.sqrt() / 4.0 * epsilon * epsilon),
    }
}

/// `κ⁻¹𝓓_h` of the optimal one-dimensional profile
/// `v = 1 − exp(−dist(x, S)/(2ε))` around the segment `S = [0, 1] × {0}`,
/// on a structured mesh of `[−0.1, 1.1] × [−0.1, 0.1]` with spacing `h`.
pub fn at_crack_length(epsilon: f64, h: f64) -> f64 {
    use shellfrac::fem::interpolate;
    use shellfrac::mesh::Triangulation;
    let rect = Rect::new(-0.1, 1.1, -0.1, 0.1);
    let nx = (rect.width() / h).ceil() as usize;
    let ny = (rect.height() / h).ceil() as usize;
    let mesh = Triangulation::structured_rect(rect, nx, ny).unwrap();
    let chart = SurfaceChart::flat(rect);
    let space = FeSpace::new(&mesh, &chart).unwrap();
    let v = interpolate(&mesh, |p| {
        let dx = (p[0] - p[0].clamp(0.0, 1.0)).abs();
        let d = dx.hypot(p[1]);
        1.0 - (-d / (2.0 * epsilon)).exp()
    })
    .unwrap();
    let params = ModelParams {
        epsilon,
        ..ModelParams::default()
    };
    space.crack_length(&v, &params).unwrap()
}
