//! P1 finite elements: nodal fields, the discrete energies and their derivatives.
//!
//! Gradient terms `∇·ᵀA∇·` and the curvature mass `∫ b u²` use the three-point
//! edge-midpoint rule with weights `|T|/3`; terms written through the nodal
//! interpolant `Π_h` are lumped with the vertex rule. The coefficient fields
//! are sampled at the quadrature points.

use crate::error::{Error, Result};
use crate::geometry::SurfaceChart;
use crate::linalg::{dot, Sym2, Vec2};
use crate::mesh::Triangulation;
use crate::par;
use crate::sparse::CsrMatrix;

/// Nodal values of a P1 function.
#[derive(Clone, Debug, PartialEq)]
pub struct FeField {
    pub values: Vec<f64>,
}

impl FeField {
    pub fn new(values: Vec<f64>) -> Self {
        FeField { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        FeField { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_mesh(&self, mesh: &Triangulation) -> Result<()> {
        if self.values.len() != mesh.n_vertices() {
            return Err(Error::MeshMismatch(format!(
                "field has {} values, mesh has {} vertices",
                self.values.len(),
                mesh.n_vertices()
            )));
        }
        Ok(())
    }

    /// Phase-field range check (no clamping).
    pub fn check_unit_interval(&self, slack: f64) -> Result<()> {
        match self
            .values
            .iter()
            .position(|&x| !(x >= -slack && x <= 1.0 + slack))
        {
            Some(i) => Err(Error::Input(format!(
                "phase field value {} at vertex {i} is outside [0, 1]",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn max_abs_diff(&self, other: &FeField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Nodal interpolant `Π_h f`.
pub fn interpolate(mesh: &Triangulation, f: impl Fn(Vec2) -> f64) -> Result<FeField> {
    let values: Vec<f64> = mesh.vertices().iter().map(|&p| f(p)).collect();
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!(
            "interpolated function is not finite at vertex {i}"
        )));
    }
    Ok(FeField { values })
}

/// Model parameters of the regularized functional and the time discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub eta: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub tau: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            epsilon: 5e-3,
            eta: 1e-5,
            kappa: 1.0,
            alpha: 1e-3,
            tau: 1e-2,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.eta > 0.0
            && self.kappa > 0.0
            && self.alpha >= 0.0
            && self.tau > 0.0
            && [self.epsilon, self.eta, self.kappa, self.alpha, self.tau]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid model parameters {self:?}"
            )))
        }
    }
}

/// Energy split reported by [`FeSpace::energy`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiscreteEnergyParts {
    pub elastic: f64,
    pub dissipation: f64,
    pub penalty: f64,
    pub total: f64,
}

/// `‖v‖_{𝒳_h} = (∫ Π_h(v²))^{1/2}`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct XhNorm {
    pub value: f64,
}

/// Per-element geometric data and coefficient samples.
#[derive(Clone, Debug)]
struct ElementData {
    area: f64,
    grads: [Vec2; 3],
    /// `A` at the midpoint of local edge `(k, k+1)`.
    a_mid: [Sym2; 3],
    b_mid: [f64; 3],
    /// `Σ_k (|T|/3) A(m_k)`.
    a_bar: Sym2,
}

/// Quadrature cache for one mesh and chart.
pub struct FeSpace<'a> {
    mesh: &'a Triangulation,
    chart: &'a SurfaceChart,
    elements: Vec<ElementData>,
    sqrt_a_vertex: Vec<f64>,
    /// Lumped areas `m_l = Σ_{T∋l} |T|/3`.
    lumped_mass: Vec<f64>,
    /// `S_l = m_l √a(x_l)`.
    lumped_sqrt_a: Vec<f64>,
    pattern: CsrMatrix,
    scatter: Vec<[usize; 9]>,
}

impl<'a> FeSpace<'a> {
    pub fn new(mesh: &'a Triangulation, chart: &'a SurfaceChart) -> Result<Self> {
        let elements: Vec<Result<ElementData>> = par::map_range(mesh.n_triangles(), |t| {
            let area = mesh.area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement(t));
            }
            let p = mesh.corners(t);
            let mut a_mid = [Sym2::ZERO; 3];
            let mut b_mid = [0.0; 3];
            let mut a_bar = Sym2::ZERO;
            for k in 0..3 {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                let e = chart.eval([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])?;
                a_mid[k] = e.aniso;
                b_mid[k] = e.b_coeff;
                a_bar = a_bar + e.aniso * (area / 3.0);
            }
            Ok(ElementData {
                area,
                grads: mesh.basis_gradients(t),
                a_mid,
                b_mid,
                a_bar,
            })
        });
        let elements = elements.into_iter().collect::<Result<Vec<_>>>()?;
        let sqrt_a_vertex = par::map_range(mesh.n_vertices(), |v| {
            chart.eval(mesh.vertex(v)).map(|e| e.sqrt_a)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mut lumped_mass = vec![0.0; mesh.n_vertices()];
        for (t, el) in elements.iter().enumerate() {
            for &v in &mesh.triangle(t) {
                lumped_mass[v] += el.area / 3.0;
            }
        }
        let lumped_sqrt_a = lumped_mass
            .iter()
            .zip(&sqrt_a_vertex)
            .map(|(m, s)| m * s)
            .collect();

        let mut rows: Vec<Vec<usize>> = (0..mesh.n_vertices()).map(|i| vec![i]).collect();
        for e in mesh.edges() {
            rows[e.v[0]].push(e.v[1]);
            rows[e.v[1]].push(e.v[0]);
        }
        let pattern = CsrMatrix::from_pattern(&rows);
        let scatter = (0..mesh.n_triangles())
            .map(|t| {
                let tri = mesh.triangle(t);
                let mut s = [0usize; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        s[3 * i + j] = pattern.position(tri[i], tri[j]).expect("edge in pattern");
                    }
                }
                s
            })
            .collect();
        Ok(FeSpace {
            mesh,
            chart,
            elements,
            sqrt_a_vertex,
            lumped_mass,
            lumped_sqrt_a,
            pattern,
            scatter,
        })
    }

    pub fn mesh(&self) -> &Triangulation {
        self.mesh
    }

    pub fn chart(&self) -> &SurfaceChart {
        self.chart
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn lumped_sqrt_a(&self) -> &[f64] {
        &self.lumped_sqrt_a
    }

    pub fn sqrt_a_vertex(&self) -> &[f64] {
        &self.sqrt_a_vertex
    }

    /// Whether `b` is nonzero somewhere, which makes the displacement problem
    /// coercive without Dirichlet data.
    pub fn has_zero_order_term(&self) -> bool {
        self.elements
            .iter()
            .any(|e| e.b_mid.iter().any(|&b| b > 0.0))
    }

    fn mu(&self) -> f64 {
        self.chart.lame_mu
    }

    fn check(&self, f: &FeField) -> Result<()> {
        f.check_mesh(self.mesh)
    }

    fn element_gradient(&self, t: usize, w: &[f64]) -> Vec2 {
        let tri = self.mesh.triangle(t);
        let g = &self.elements[t].grads;
        let mut d = [0.0; 2];
        for k in 0..3 {
            d[0] += w[tri[k]] * g[k][0];
            d[1] += w[tri[k]] * g[k][1];
        }
        d
    }

    /// Piecewise-constant gradient of `w` on element `t`.
    pub fn gradient(&self, t: usize, w: &FeField) -> Vec2 {
        self.element_gradient(t, &w.values)
    }

    /// `(μ/2)∫(Π_h(v²)+η)∇uᵀA∇u + ½∫ b u²`.
    pub fn elastic(&self, u: &FeField, v: &FeField, params: &ModelParams) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let mu = self.mu();
        let (u, v) = (&u.values, &v.values);
        let parts = par::map_range(self.mesh.n_triangles(), |t| {
            let el = &self.elements[t];
            let tri = self.mesh.triangle(t);
            let du = self.element_gradient(t, u);
            let w = el.area / 3.0;
            let mut e = 0.0;
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let um = 0.5 * (u[a] + u[b]);
                let v2 = 0.5 * (v[a] * v[a] + v[b] * v[b]);
                e += w
                    * (0.5 * el.b_mid[k] * um * um
                        + 0.5 * mu * (v2 + params.eta) * el.a_mid[k].quad(du));
            }
            e
        });
        Ok(parts.iter().sum())
    }

    /// `κ∫[(1/4ε)Π_h((1−v)²)√a + ε∇vᵀA∇v]`.
    pub fn dissipation(&self, v: &FeField, params: &ModelParams) -> Result<f64> {
        self.check(v)?;
        let v = &v.values;
        let grad = par::map_range(self.mesh.n_triangles(), |t| {
            let dv = self.element_gradient(t, v);
            self.elements[t].a_bar.quad(dv)
        });
        let grad: f64 = grad.iter().sum();
        let lumped: f64 = v
            .iter()
            .zip(&self.lumped_sqrt_a)
            .map(|(x, s)| s * (1.0 - x) * (1.0 - x))
            .sum();
        Ok(params.kappa * (lumped / (4.0 * params.epsilon) + params.epsilon * grad))
    }

    pub fn xh_norm(&self, v: &FeField) -> Result<XhNorm> {
        self.check(v)?;
        let s: f64 = v
            .values
            .iter()
            .zip(&self.lumped_mass)
            .map(|(x, m)| m * x * x)
            .sum();
        Ok(XhNorm { value: s.sqrt() })
    }

    /// `(α/2τ)‖v − prev‖²_{𝒳_h}`.
    pub fn penalty(&self, v: &FeField, prev: &FeField, params: &ModelParams) -> Result<f64> {
        self.check(v)?;
        self.check(prev)?;
        let s: f64 = v
            .values
            .iter()
            .zip(&prev.values)
            .zip(&self.lumped_mass)
            .map(|((a, b), m)| m * (a - b) * (a - b))
            .sum();
        Ok(params.alpha / (2.0 * params.tau) * s)
    }

    pub fn energy(
        &self,
        u: &FeField,
        v: &FeField,
        prev: Option<&FeField>,
        params: &ModelParams,
    ) -> Result<DiscreteEnergyParts> {
        let elastic = self.elastic(u, v, params)?;
        let dissipation = self.dissipation(v, params)?;
        let penalty = match prev {
            Some(p) => self.penalty(v, p, params)?,
            None => 0.0,
        };
        Ok(DiscreteEnergyParts {
            elastic,
            dissipation,
            penalty,
            total: elastic + dissipation + penalty,
        })
    }

    /// Crack-length diagnostic `κ⁻¹ 𝓓_h(v)`.
    pub fn crack_length(&self, v: &FeField, params: &ModelParams) -> Result<f64> {
        Ok(self.dissipation(v, params)? / params.kappa)
    }

    fn assemble(&self, local: impl Fn(usize) -> [f64; 9] + Sync + Send) -> CsrMatrix {
        let blocks = par::map_range(self.mesh.n_triangles(), local);
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (s, b) in self.scatter.iter().zip(&blocks) {
            for k in 0..9 {
                vals[s[k]] += b[k];
            }
        }
        m
    }

    /// Stiffness `∫ ∇ξ_lᵀ A ∇ξ_m` without any weight.
    pub fn stiffness(&self) -> CsrMatrix {
        self.assemble(|t| {
            let el = &self.elements[t];
            local_stiffness(&el.grads, &el.a_bar)
        })
    }

    /// Hessian of `𝓔_h(·, v)`: `∫ b ξ_lξ_m + μ∫(Π_h(v²)+η)∇ξ_lᵀA∇ξ_m` (no
    /// boundary conditions applied).
    pub fn displacement_matrix(&self, v: &FeField, params: &ModelParams) -> Result<CsrMatrix> {
        self.check(v)?;
        let mu = self.mu();
        let v = &v.values;
        Ok(self.assemble(|t| {
            let el = &self.elements[t];
            let tri = self.mesh.triangle(t);
            let w = el.area / 3.0;
            let mut a = Sym2::ZERO;
            let mut out = [0.0; 9];
            for k in 0..3 {
                let (i, j) = (k, (k + 1) % 3);
                let v2 = 0.5 * (v[tri[i]] * v[tri[i]] + v[tri[j]] * v[tri[j]]);
                a = a + el.a_mid[k] * (w * mu * (v2 + params.eta));
                // Basis values at the midpoint of edge (i, j) are ½ on i and j.
                let m = 0.25 * w * el.b_mid[k];
                out[3 * i + i] += m;
                out[3 * j + j] += m;
                out[3 * i + j] += m;
                out[3 * j + i] += m;
            }
            let s = local_stiffness(&el.grads, &a);
            for k in 0..9 {
                out[k] += s[k];
            }
            out
        }))
    }

    /// Lumped strain weights `W_l = Σ_T Σ_q (|T|/3) ξ_l(q) ∇uᵀA(q)∇u`.
    pub fn strain_weights(&self, u: &FeField) -> Result<Vec<f64>> {
        self.check(u)?;
        let u = &u.values;
        let local = par::map_range(self.mesh.n_triangles(), |t| {
            let el = &self.elements[t];
            let du = self.element_gradient(t, u);
            let w = el.area / 3.0;
            let mut out = [0.0; 3];
            for k in 0..3 {
                let s = 0.5 * w * el.a_mid[k].quad(du);
                out[k] += s;
                out[(k + 1) % 3] += s;
            }
            out
        });
        let mut wl = vec![0.0; self.mesh.n_vertices()];
        for (t, o) in local.iter().enumerate() {
            for (k, &v) in self.mesh.triangle(t).iter().enumerate() {
                wl[v] += o[k];
            }
        }
        Ok(wl)
    }

    /// Phase QP `½vᵀHv − cᵀv` equal to `𝓕_h(u, ·) + (α/2τ)‖· − prev‖²` up to a
    /// constant.
    pub fn phase_system(
        &self,
        u: &FeField,
        prev: &FeField,
        params: &ModelParams,
    ) -> Result<(CsrMatrix, Vec<f64>)> {
        self.check(prev)?;
        let w = self.strain_weights(u)?;
        let mut h = self.stiffness();
        h.scale(2.0 * params.kappa * params.epsilon);
        let k2e = params.kappa / (2.0 * params.epsilon);
        let at = params.alpha / params.tau;
        let mu = self.mu();
        let diag: Vec<f64> = (0..self.mesh.n_vertices())
            .map(|l| mu * w[l] + k2e * self.lumped_sqrt_a[l] + at * self.lumped_mass[l])
            .collect();
        h.add_to_diagonal(&diag);
        let c = (0..self.mesh.n_vertices())
            .map(|l| k2e * self.lumped_sqrt_a[l] + at * self.lumped_mass[l] * prev.values[l])
            .collect();
        Ok((h, c))
    }

    /// Gradient of `𝓔_h(·, v)` at `u`.
    pub fn grad_u(&self, u: &FeField, v: &FeField, params: &ModelParams) -> Result<Vec<f64>> {
        self.check(u)?;
        Ok(self.displacement_matrix(v, params)?.mul_vec(&u.values))
    }

    /// Gradient of `𝓕_h(u, ·) + penalty` at `v`.
    pub fn grad_v(
        &self,
        u: &FeField,
        v: &FeField,
        prev: &FeField,
        params: &ModelParams,
    ) -> Result<Vec<f64>> {
        self.check(v)?;
        let (h, c) = self.phase_system(u, prev, params)?;
        let mut g = h.mul_vec(&v.values);
        for (gi, ci) in g.iter_mut().zip(&c) {
            *gi -= ci;
        }
        Ok(g)
    }

    pub(crate) fn element_area(&self, t: usize) -> f64 {
        self.elements[t].area
    }
}

fn local_stiffness(g: &[Vec2; 3], a: &Sym2) -> [f64; 9] {
    let ag = [a.apply(g[0]), a.apply(g[1]), a.apply(g[2])];
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = dot(g[i], ag[j]);
        }
    }
    out
}

/// Nodal Dirichlet data: `Some(g)` on constrained vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletData {
    pub values: Vec<Option<f64>>,
}

impl DirichletData {
    pub fn none(n: usize) -> Self {
        DirichletData {
            values: vec![None; n],
        }
    }

    pub fn n_fixed(&self) -> usize {
        self.values.iter().filter(|x| x.is_some()).count()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.values[i].is_none()
    }
}

/// Displacement system with Dirichlet rows eliminated symmetrically; the lift
/// enters the load.
pub fn assemble_displacement_system(
    space: &FeSpace,
    v: &FeField,
    dirichlet: &DirichletData,
    params: &ModelParams,
) -> Result<(CsrMatrix, Vec<f64>)> {
    if dirichlet.values.len() != space.mesh().n_vertices() {
        return Err(Error::MeshMismatch(
            "Dirichlet data length differs from vertex count".into(),
        ));
    }
    let mut k = space.displacement_matrix(v, params)?;
    let mut rhs = vec![0.0; k.n()];
    k.eliminate(&dirichlet.values, &mut rhs);
    Ok((k, rhs))
}
