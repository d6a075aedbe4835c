//! Displacement solve, bound-constrained phase QP and the alternating loop.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::fem::{assemble_displacement_system, DirichletData, FeField, FeSpace, ModelParams};
use crate::sparse::{norm_inf, solve_spd, CgOptions, CsrMatrix};

/// Settings of the bound-constrained QP solver.
#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    /// Primal-dual active-set iterations before the projected fallback.
    pub max_active_set_iter: usize,
    /// Projected-gradient iterations of the fallback.
    pub max_fallback_iter: usize,
    /// KKT tolerance relative to the problem scale.
    pub kkt_tol: f64,
    pub cg: CgOptions,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_active_set_iter: 100,
            max_fallback_iter: 20_000,
            kkt_tol: 1e-8,
            cg: CgOptions {
                rel_tol: 1e-13,
                max_iter_factor: 10,
            },
        }
    }
}

/// Result of [`solve_bound_qp`].
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub used_fallback: bool,
}

/// `max(1, ‖c‖∞, ‖Hx‖∞)`.
pub fn qp_scale(h: &CsrMatrix, c: &[f64], x: &[f64]) -> f64 {
    1f64.max(norm_inf(c)).max(norm_inf(&h.mul_vec(x)))
}

/// KKT violation of `min ½xᵀHx − cᵀx, x ≤ ub`: `(max |g| on inactive nodes,
/// max g on active nodes, max bound violation)`, with `g = Hx − c`.
pub fn qp_kkt_violation(h: &CsrMatrix, c: &[f64], ub: &[f64], x: &[f64], active: &[bool]) -> f64 {
    let hx = h.mul_vec(x);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let g = hx[i] - c[i];
        worst = worst.max(x[i] - ub[i]);
        if active[i] {
            worst = worst.max(g);
        } else {
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// Natural residual `max_i |min(ub_i − x_i, −g_i)|`.
pub fn qp_natural_residual(h: &CsrMatrix, c: &[f64], ub: &[f64], x: &[f64]) -> f64 {
    let hx = h.mul_vec(x);
    (0..x.len())
        .map(|i| (ub[i] - x[i]).min(c[i] - hx[i]).abs())
        .fold(0.0, f64::max)
}

fn solve_on_inactive(
    h: &CsrMatrix,
    c: &[f64],
    ub: &[f64],
    active: &[bool],
    x: &mut [f64],
    cg: CgOptions,
) -> Result<()> {
    let fixed: Vec<Option<f64>> = active
        .iter()
        .zip(ub)
        .map(|(&a, &u)| a.then_some(u))
        .collect();
    let mut m = h.clone();
    let mut rhs = c.to_vec();
    m.eliminate(&fixed, &mut rhs);
    for (xi, f) in x.iter_mut().zip(&fixed) {
        if let Some(g) = f {
            *xi = *g;
        }
    }
    solve_spd(&m, &rhs, x, cg)?;
    Ok(())
}

/// Minimizes `½xᵀHx − cᵀx` subject to `x ≤ ub` for SPD `H`.
///
/// Primal-dual active set iteration with `A = {i : λ_i + (x_i − ub_i) > 0}`
/// (ties count as inactive); if the active set cycles or the iteration budget
/// runs out, a projected-gradient iteration with periodic active-set
/// polishing takes over.
pub fn solve_bound_qp(
    h: &CsrMatrix,
    c: &[f64],
    ub: &[f64],
    x0: &[f64],
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = h.n();
    if c.len() != n || ub.len() != n || x0.len() != n {
        return Err(Error::MeshMismatch("QP data lengths differ".into()));
    }
    let mut x: Vec<f64> = x0.iter().zip(ub).map(|(a, b)| a.min(*b)).collect();
    let hx = h.mul_vec(&x);
    let mut active: Vec<bool> = (0..n)
        .map(|i| {
            let lambda = if x[i] >= ub[i] {
                (c[i] - hx[i]).max(0.0)
            } else {
                0.0
            };
            lambda + (x[i] - ub[i]) > 0.0
        })
        .collect();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    seen.insert(active.clone());
    for it in 1..=opts.max_active_set_iter {
        solve_on_inactive(h, c, ub, &active, &mut x, opts.cg)?;
        let hx = h.mul_vec(&x);
        let next: Vec<bool> = (0..n)
            .map(|i| {
                let lambda = if active[i] { c[i] - hx[i] } else { 0.0 };
                lambda + (x[i] - ub[i]) > 0.0
            })
            .collect();
        if next == active {
            let tol = opts.kkt_tol * qp_scale(h, c, &x);
            if qp_kkt_violation(h, c, ub, &x, &active) <= tol {
                return Ok(QpSolution {
                    x,
                    active,
                    iterations: it,
                    used_fallback: false,
                });
            }
            break;
        }
        if !seen.insert(next.clone()) {
            break;
        }
        active = next;
    }
    projected_fallback(h, c, ub, x, opts)
}

fn projected_fallback(
    h: &CsrMatrix,
    c: &[f64],
    ub: &[f64],
    mut x: Vec<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = h.n();
    for (xi, u) in x.iter_mut().zip(ub) {
        *xi = xi.min(*u);
    }
    // Gershgorin bound on the largest eigenvalue gives a safe step.
    let lip = (0..n)
        .map(|i| h.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut polished = x.clone();
    for it in 1..=opts.max_fallback_iter {
        let hx = h.mul_vec(&x);
        for i in 0..n {
            x[i] = (x[i] - (hx[i] - c[i]) / lip).min(ub[i]);
        }
        if it % 5 == 0 {
            let hx = h.mul_vec(&x);
            let active: Vec<bool> = (0..n)
                .map(|i| ub[i] - x[i] <= 1e-12 * (1.0 + ub[i].abs()) && hx[i] - c[i] < 0.0)
                .collect();
            polished.copy_from_slice(&x);
            solve_on_inactive(h, c, ub, &active, &mut polished, opts.cg)?;
            let tol = opts.kkt_tol * qp_scale(h, c, &polished);
            if qp_kkt_violation(h, c, ub, &polished, &active) <= tol {
                return Ok(QpSolution {
                    x: polished,
                    active,
                    iterations: it,
                    used_fallback: true,
                });
            }
        }
    }
    Err(Error::NotConverged {
        message: "bound-constrained QP did not reach the KKT tolerance".into(),
        last_iterate: x,
    })
}

/// Minimizer of `𝓔_h(·, v)` subject to the Dirichlet data.
pub fn solve_displacement(
    space: &FeSpace,
    v: &FeField,
    dirichlet: &DirichletData,
    params: &ModelParams,
    warm: Option<&FeField>,
    cg: CgOptions,
) -> Result<FeField> {
    if dirichlet.n_fixed() == 0 && !space.has_zero_order_term() {
        return Err(Error::Solvability(
            "no Dirichlet vertices and vanishing zeroth-order coefficient".into(),
        ));
    }
    let (k, rhs) = assemble_displacement_system(space, v, dirichlet, params)?;
    let mut x = match warm {
        Some(w) => {
            w.check_mesh(space.mesh())?;
            w.values.clone()
        }
        None => vec![0.0; k.n()],
    };
    for (xi, g) in x.iter_mut().zip(&dirichlet.values) {
        if let Some(g) = g {
            *xi = *g;
        }
    }
    solve_spd(&k, &rhs, &mut x, cg)?;
    Ok(FeField::new(x))
}

/// Minimizer of `𝓕_h(u, ·) + (α/2τ)‖· − prev‖²_{𝒳_h}` subject to `v ≤ bound`.
pub fn solve_phase(
    space: &FeSpace,
    u: &FeField,
    prev: &FeField,
    bound: &FeField,
    params: &ModelParams,
    warm: Option<&FeField>,
    opts: &QpOptions,
) -> Result<FeField> {
    bound.check_mesh(space.mesh())?;
    let (h, c) = space.phase_system(u, prev, params)?;
    let x0 = warm.unwrap_or(bound);
    x0.check_mesh(space.mesh())?;
    let sol = solve_bound_qp(&h, &c, &bound.values, &x0.values, opts)?;
    Ok(FeField::new(sol.x))
}

/// Residuals of the discrete critical-point conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticalPointResidual {
    /// `‖∂_u 𝓔_h(u, v)‖∞` over free vertices.
    pub stationarity_u: f64,
    /// `max_l |min(ṽ_l − v_l, −∂_v(𝓕_h + penalty)_l)|`.
    pub complementarity_v: f64,
    /// `max(1, ‖load‖∞, ‖c‖∞, ‖Hv‖∞)`.
    pub scale: f64,
}

impl CriticalPointResidual {
    pub fn max(&self) -> f64 {
        self.stationarity_u.max(self.complementarity_v)
    }

    pub fn within(&self, rel_tol: f64) -> bool {
        self.max() <= rel_tol * self.scale
    }
}

pub fn residual(
    space: &FeSpace,
    u: &FeField,
    v: &FeField,
    bound: &FeField,
    dirichlet: &DirichletData,
    params: &ModelParams,
) -> Result<CriticalPointResidual> {
    let k = space.displacement_matrix(v, params)?;
    let ku = k.mul_vec(&u.values);
    let mut stationarity_u = 0.0f64;
    for (i, r) in ku.iter().enumerate() {
        if dirichlet.is_free(i) {
            stationarity_u = stationarity_u.max(r.abs());
        }
    }
    // Load of the eliminated system: the lift seen by the free rows.
    let mut load = 0.0f64;
    for i in 0..k.n() {
        if !dirichlet.is_free(i) {
            continue;
        }
        let (cols, vals) = k.row(i);
        let l: f64 = cols
            .iter()
            .zip(vals)
            .filter_map(|(&j, &a)| dirichlet.values[j].map(|g| a * g))
            .sum();
        load = load.max(l.abs());
    }
    let (h, c) = space.phase_system(u, bound, params)?;
    let complementarity_v = qp_natural_residual(&h, &c, &bound.values, &v.values);
    let scale = qp_scale(&h, &c, &v.values).max(load);
    Ok(CriticalPointResidual {
        stationarity_u,
        complementarity_v,
        scale,
    })
}

/// Settings of the alternating minimization.
#[derive(Clone, Copy, Debug)]
pub struct AltMinOptions {
    pub tol_v: f64,
    pub max_sweeps: usize,
    /// Also require the critical-point residual below `kkt_tol · scale`
    /// before declaring convergence.
    pub require_kkt: bool,
    pub kkt_tol: f64,
    pub qp: QpOptions,
    pub cg: CgOptions,
}

impl Default for AltMinOptions {
    fn default() -> Self {
        AltMinOptions {
            tol_v: 2e-3,
            max_sweeps: 8,
            require_kkt: false,
            kkt_tol: 1e-6,
            qp: QpOptions::default(),
            cg: CgOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AltMinResult {
    pub u: FeField,
    pub v: FeField,
    pub iterations: usize,
    pub final_increment: f64,
    /// `𝓕_h + (α/2τ)‖v − prev‖²` after every sweep.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
    pub residual: CriticalPointResidual,
}

/// Alternates displacement and phase solves from `(u0, v0)` with `prev` as
/// both the irreversibility bound and the penalty anchor.
#[allow(clippy::too_many_arguments)]
pub fn alternate_minimize(
    space: &FeSpace,
    u0: &FeField,
    v0: &FeField,
    prev: &FeField,
    dirichlet: &DirichletData,
    params: &ModelParams,
    opts: &AltMinOptions,
) -> Result<AltMinResult> {
    u0.check_mesh(space.mesh())?;
    v0.check_mesh(space.mesh())?;
    prev.check_mesh(space.mesh())?;
    if let Some(i) = (0..v0.len()).find(|&i| v0.values[i] > prev.values[i] + 1e-12) {
        return Err(Error::Input(format!(
            "initial phase field exceeds the bound at vertex {i}"
        )));
    }
    let mut u = u0.clone();
    let mut v = v0.clone();
    let mut trace = Vec::new();
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut res = CriticalPointResidual::default();
    while iterations < opts.max_sweeps {
        iterations += 1;
        u = solve_displacement(space, &v, dirichlet, params, Some(&u), opts.cg)?;
        let v_new = solve_phase(space, &u, prev, prev, params, Some(&v), &opts.qp)?;
        increment = v_new.max_abs_diff(&v);
        v = v_new;
        trace.push(space.energy(&u, &v, Some(prev), params)?.total);
        if increment < opts.tol_v {
            if !opts.require_kkt {
                converged = true;
                break;
            }
            res = residual(space, &u, &v, prev, dirichlet, params)?;
            if res.within(opts.kkt_tol) {
                converged = true;
                break;
            }
        }
    }
    if !converged || !opts.require_kkt {
        res = residual(space, &u, &v, prev, dirichlet, params)?;
    }
    Ok(AltMinResult {
        u,
        v,
        iterations,
        final_increment: increment,
        energy_trace: trace,
        converged,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rect, SurfaceChart};
    use crate::mesh::Triangulation;

    #[test]
    fn zero_data_gives_zero_displacement() {
        let m = Triangulation::structured_rect(Rect::unit(), 4, 4).unwrap();
        let chart = SurfaceChart::flat(Rect::unit());
        let s = FeSpace::new(&m, &chart).unwrap();
        let mut d = DirichletData::none(m.n_vertices());
        d.values[0] = Some(0.0);
        let u = solve_displacement(
            &s,
            &FeField::constant(m.n_vertices(), 0.3),
            &d,
            &ModelParams::default(),
            None,
            CgOptions::default(),
        )
        .unwrap();
        assert!(u.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn no_dirichlet_on_flat_chart_is_singular() {
        let m = Triangulation::structured_rect(Rect::unit(), 2, 2).unwrap();
        let chart = SurfaceChart::flat(Rect::unit());
        let s = FeSpace::new(&m, &chart).unwrap();
        let r = solve_displacement(
            &s,
            &FeField::constant(m.n_vertices(), 1.0),
            &DirichletData::none(m.n_vertices()),
            &ModelParams::default(),
            None,
            CgOptions::default(),
        );
        assert!(matches!(r, Err(Error::Solvability(_))));
    }

    #[test]
    fn bound_zero_forces_broken_state() {
        let m = Triangulation::structured_rect(Rect::unit(), 3, 3).unwrap();
        let chart = SurfaceChart::flat(Rect::unit());
        let s = FeSpace::new(&m, &chart).unwrap();
        let n = m.n_vertices();
        let u = crate::fem::interpolate(&m, |p| p[0]).unwrap();
        let zero = FeField::constant(n, 0.0);
        let v = solve_phase(
            &s,
            &u,
            &zero,
            &zero,
            &ModelParams::default(),
            None,
            &QpOptions::default(),
        )
        .unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sound_state_is_critical() {
        let m = Triangulation::structured_rect(Rect::unit(), 3, 3).unwrap();
        let chart = SurfaceChart::flat(Rect::unit());
        let s = FeSpace::new(&m, &chart).unwrap();
        let n = m.n_vertices();
        let mut d = DirichletData::none(n);
        d.values[0] = Some(0.0);
        d.values[n - 1] = Some(0.0);
        let one = FeField::constant(n, 1.0);
        let zero = FeField::constant(n, 0.0);
        let mut p = ModelParams::default();
        p.alpha = 0.0;
        let r =
            alternate_minimize(&s, &zero, &one, &one, &d, &p, &AltMinOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.v.values.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        assert!(r.residual.max() < 1e-12);
    }
}
