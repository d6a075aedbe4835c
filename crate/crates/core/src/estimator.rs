//! Anisotropic residual estimator with Zienkiewicz–Zhu gradient recovery.
//!
//! Element norms use the same edge-midpoint rule as the energy assembly
//! (or a degree-four rule for robustness checks); edge norms use Gauss points.
//! Boundary edges carry the doubled conormal flux in place of a jump.

use std::io::Write;

use crate::error::Result;
use crate::fem::{FeField, FeSpace, ModelParams};
use crate::linalg::{dot, norm, Sym2, Vec2};
use crate::mesh::{ElementMap, Triangulation};
use crate::par;

/// Quadrature used for the element and edge norms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Edge midpoints on elements, two Gauss points per edge.
    #[default]
    Standard,
    /// Six-point degree-four rule on elements, three Gauss points per edge.
    Refined,
}

impl QuadratureRule {
    fn element_points(self) -> Vec<([f64; 3], f64)> {
        match self {
            QuadratureRule::Standard => vec![
                ([0.5, 0.5, 0.0], 1.0 / 3.0),
                ([0.0, 0.5, 0.5], 1.0 / 3.0),
                ([0.5, 0.0, 0.5], 1.0 / 3.0),
            ],
            QuadratureRule::Refined => {
                let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
                let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
                let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
                vec![
                    ([ca, a, a], wa),
                    ([a, ca, a], wa),
                    ([a, a, ca], wa),
                    ([cb, b, b], wb),
                    ([b, cb, b], wb),
                    ([b, b, cb], wb),
                ]
            }
        }
    }

    /// Points on `[0, 1]` and weights summing to one.
    fn edge_points(self) -> Vec<(f64, f64)> {
        match self {
            QuadratureRule::Standard => {
                let d = 0.5 / 3f64.sqrt();
                vec![(0.5 - d, 0.5), (0.5 + d, 0.5)]
            }
            QuadratureRule::Refined => {
                let d = 0.5 * 0.6f64.sqrt();
                vec![
                    (0.5 - d, 5.0 / 18.0),
                    (0.5, 8.0 / 18.0),
                    (0.5 + d, 5.0 / 18.0),
                ]
            }
        }
    }
}

/// Recovered nodal gradient of a P1 field.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredGradient {
    pub values: Vec<Vec2>,
}

/// Area-weighted average of the incident element gradients at every vertex.
pub fn zz_recover(space: &FeSpace, w: &FeField) -> Result<RecoveredGradient> {
    w.check_mesh(space.mesh())?;
    let mesh = space.mesh();
    let grads = element_gradients(space, w);
    let values = par::map_range(mesh.n_vertices(), |v| {
        let mut acc = [0.0; 2];
        let mut area = 0.0;
        for &t in mesh.vertex_triangles(v) {
            let a = space.element_area(t);
            acc[0] += a * grads[t][0];
            acc[1] += a * grads[t][1];
            area += a;
        }
        if area > 0.0 {
            [acc[0] / area, acc[1] / area]
        } else {
            [0.0, 0.0]
        }
    });
    Ok(RecoveredGradient { values })
}

fn element_gradients(space: &FeSpace, w: &FeField) -> Vec<Vec2> {
    par::map_range(space.mesh().n_triangles(), |t| space.gradient(t, w))
}

/// `∫_K (∇w − R)(∇w − R)ᵀ` on a single element, with `R` interpolated as a P1
/// field (the midpoint rule is exact for this quadratic integrand).
fn element_recovery_matrix(
    mesh: &Triangulation,
    grad: Vec2,
    rec: &RecoveredGradient,
    t: usize,
) -> Sym2 {
    let tri = mesh.triangle(t);
    let w = mesh.area(t) / 3.0;
    let mut g = Sym2::ZERO;
    for k in 0..3 {
        let (a, b) = (rec.values[tri[k]], rec.values[tri[(k + 1) % 3]]);
        let d = [grad[0] - 0.5 * (a[0] + b[0]), grad[1] - 0.5 * (a[1] + b[1])];
        g = g + Sym2::outer(d) * w;
    }
    g
}

/// Recovery matrix `G_T^R(w)` integrated over the patch of `t`.
pub fn recovery_matrix(
    space: &FeSpace,
    w: &FeField,
    rec: &RecoveredGradient,
    t: usize,
) -> Result<Sym2> {
    w.check_mesh(space.mesh())?;
    let mesh = space.mesh();
    Ok(mesh.patch(t).into_iter().fold(Sym2::ZERO, |acc, k| {
        acc + element_recovery_matrix(mesh, space.gradient(k, w), rec, k)
    }))
}

/// Patch recovery matrices of every element.
fn all_recovery_matrices(space: &FeSpace, w: &FeField) -> Result<Vec<Sym2>> {
    let mesh = space.mesh();
    let rec = zz_recover(space, w)?;
    let grads = element_gradients(space, w);
    let local = par::map_range(mesh.n_triangles(), |t| {
        element_recovery_matrix(mesh, grads[t], &rec, t)
    });
    Ok(par::map_range(mesh.n_triangles(), |t| {
        mesh.patch(t)
            .into_iter()
            .fold(Sym2::ZERO, |acc, k| acc + local[k])
    }))
}

/// Residual weights of one element, split into their additive terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElementWeights {
    pub gamma: f64,
    pub rho: f64,
    /// `‖p‖`, the `Π_h(v²)` defect term and the flux-jump term of `γ_T`.
    pub gamma_terms: [f64; 3],
    /// `‖q‖`, the flux-jump term, the source term and the bound term of `ρ_T`.
    pub rho_terms: [f64; 4],
}

/// Fields entering the weights.
#[derive(Clone, Copy)]
pub struct EstimatorInput<'f> {
    pub u: &'f FeField,
    pub v: &'f FeField,
    /// Irreversibility bound `ṽ` (the previous time step's phase field).
    pub v_bound: &'f FeField,
}

impl EstimatorInput<'_> {
    fn check(&self, mesh: &Triangulation) -> Result<()> {
        self.u.check_mesh(mesh)?;
        self.v.check_mesh(mesh)?;
        self.v_bound.check_mesh(mesh)
    }
}

/// `(γ_T, ρ_T)` of element `t`.
pub fn element_weights(
    space: &FeSpace,
    input: EstimatorInput,
    params: &ModelParams,
    t: usize,
    rule: QuadratureRule,
) -> Result<ElementWeights> {
    input.check(space.mesh())?;
    let map = space.mesh().element_map(t)?;
    weights_with_map(space, input, params, t, &map, rule)
}

fn weights_with_map(
    space: &FeSpace,
    input: EstimatorInput,
    params: &ModelParams,
    t: usize,
    map: &ElementMap,
    rule: QuadratureRule,
) -> Result<ElementWeights> {
    let mesh = space.mesh();
    let chart = space.chart();
    let mu = chart.lame_mu;
    let (kappa, eps, eta) = (params.kappa, params.epsilon, params.eta);
    let at = params.alpha / params.tau;
    let tri = mesh.triangle(t);
    let p = mesh.corners(t);
    let area = space.element_area(t);
    let (u, v, vb) = (&input.u.values, &input.v.values, &input.v_bound.values);
    let du = space.gradient(t, input.u);
    let dv = space.gradient(t, input.v);
    let dvb = space.gradient(t, input.v_bound);
    let [s1, s2] = map.sigma;
    let h_t = map.h;

    let mut p_sq = 0.0;
    let mut proj_sq = 0.0;
    let mut q_sq = 0.0;
    let mut src_sq = 0.0;
    for (l, wq) in rule.element_points() {
        let x = [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ];
        let c = chart.eval(x)?;
        let w = wq * area;
        let at_q = |f: &[f64]| l[0] * f[tri[0]] + l[1] * f[tri[1]] + l[2] * f[tri[2]];
        let (uq, vq, vbq) = (at_q(u), at_q(v), at_q(vb));
        let pi_v2 = l[0] * v[tri[0]].powi(2) + l[1] * v[tri[1]].powi(2) + l[2] * v[tri[2]].powi(2);
        let a_du = c.aniso.apply(du);
        let strain = dot(du, a_du);

        let pr = c.b_coeff * uq
            - 2.0 * mu * vq * dot(a_du, dv)
            - mu * (vq * vq + eta) * dot(du, c.div_a);
        p_sq += w * pr * pr;
        proj_sq += w * ((vq * vq - pi_v2) * norm(a_du)).powi(2);

        let qr = mu * vq * strain + kappa / (2.0 * eps) * (vq - 1.0) * c.sqrt_a
            - 2.0 * kappa * eps * dot(dv, c.div_a)
            + at * (vq - vbq);
        q_sq += w * qr * qr;
        src_sq += w * (mu * strain + kappa / (2.0 * eps) * c.sqrt_a).powi(2);
    }

    // ‖√h_{∂T} (v² + η)[[A∇u]]‖² and ‖√h_{∂T}[[A∇v]]‖².
    let mut ju_sq = 0.0;
    let mut jv_sq = 0.0;
    for e in mesh.triangle_edges(t) {
        let edge = mesh.edges()[e];
        let nu = mesh.outward_normal(t, e);
        let (other, factor) = if edge.is_boundary() {
            (None, 2.0)
        } else {
            let o = if edge.tris[0] == t {
                edge.tris[1]
            } else {
                edge.tris[0]
            };
            (Some(o), 1.0)
        };
        let (gu, gv) = match other {
            Some(o) => {
                let (ou, ov) = (space.gradient(o, input.u), space.gradient(o, input.v));
                (
                    [du[0] - ou[0], du[1] - ou[1]],
                    [dv[0] - ov[0], dv[1] - ov[1]],
                )
            }
            None => (du, dv),
        };
        let [a, b] = edge.v;
        let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
        let he = mesh.edge_length(e);
        for (s, wq) in rule.edge_points() {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let c = chart.eval(x)?;
            let a_nu = c.aniso.apply(nu);
            let jump_u = factor * dot(gu, a_nu).abs();
            let jump_v = factor * dot(gv, a_nu).abs();
            let vq = v[a] + s * (v[b] - v[a]);
            let w = wq * he;
            ju_sq += he * w * ((vq * vq + eta) * jump_u).powi(2);
            jv_sq += he * w * jump_v * jump_v;
        }
    }

    let dv_inf = norm(dv);
    let ddiff = [dv[0] - dvb[0], dv[1] - dvb[1]];
    let gamma_terms = [
        p_sq.sqrt(),
        mu / s2 * proj_sq.sqrt(),
        mu / (2.0 * (s1 * s2).sqrt()) * ju_sq.sqrt(),
    ];
    let rho_terms = [
        q_sq.sqrt(),
        kappa * eps / (s1 * s2).sqrt() * jv_sq.sqrt(),
        h_t * h_t / s2 * src_sq.sqrt() * dv_inf,
        params.alpha * h_t * h_t / (params.tau * s2) * norm(ddiff) * area.sqrt(),
    ];
    Ok(ElementWeights {
        gamma: gamma_terms.iter().sum(),
        rho: rho_terms.iter().sum(),
        gamma_terms,
        rho_terms,
    })
}

/// Localized estimator on every element of the mesh.
#[derive(Clone, Debug)]
pub struct EstimatorReport {
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// Patch recovery matrices `G_T^R(u)`.
    pub g_u: Vec<Sym2>,
    /// Patch recovery matrices `G_T^R(v)`.
    pub g_v: Vec<Sym2>,
    pub xi: Vec<f64>,
    pub global_xi: f64,
    /// Element maps the weights were computed with.
    pub maps: Vec<ElementMap>,
}

impl EstimatorReport {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// CSV with header `element_id,gamma,rho,xi`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "element_id,gamma,rho,xi")?;
        for t in 0..self.len() {
            writeln!(
                out,
                "{t},{:.16e},{:.16e},{:.16e}",
                self.gamma[t], self.rho[t], self.xi[t]
            )?;
        }
        Ok(())
    }
}

/// `(Σ_i σ_i² r_iᵀ G r_i)^{1/2}`.
fn anisotropic_norm(map: &ElementMap, g: &Sym2) -> f64 {
    let s: f64 = (0..2)
        .map(|i| map.sigma[i].powi(2) * g.quad(map.r[i]))
        .sum();
    s.max(0.0).sqrt()
}

/// `Ξ_T^R = γ_T (Σ σ_i² r_iᵀ G_T^R(u) r_i)^{1/2} + ρ_T (Σ σ_i² r_iᵀ G_T^R(v) r_i)^{1/2}`
/// on every element, with the implicit constant set to one.
pub fn localized_estimator(
    space: &FeSpace,
    input: EstimatorInput,
    params: &ModelParams,
    rule: QuadratureRule,
) -> Result<EstimatorReport> {
    let mesh = space.mesh();
    input.check(mesh)?;
    let maps = (0..mesh.n_triangles())
        .map(|t| mesh.element_map(t))
        .collect::<Result<Vec<_>>>()?;
    let weights = par::map_range(mesh.n_triangles(), |t| {
        weights_with_map(space, input, params, t, &maps[t], rule)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let g_u = all_recovery_matrices(space, input.u)?;
    let g_v = all_recovery_matrices(space, input.v)?;
    let xi: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| {
            weights[t].gamma * anisotropic_norm(&maps[t], &g_u[t])
                + weights[t].rho * anisotropic_norm(&maps[t], &g_v[t])
        })
        .collect();
    let global_xi = xi.iter().sum();
    Ok(EstimatorReport {
        gamma: weights.iter().map(|w| w.gamma).collect(),
        rho: weights.iter().map(|w| w.rho).collect(),
        g_u,
        g_v,
        xi,
        global_xi,
        maps,
    })
}
