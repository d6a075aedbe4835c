//! Metric construction from the estimator, metric-driven remeshing and field
//! transfer between meshes.

mod remesh;
mod transfer;

use std::io::Write;

pub use remesh::{remesh, Features, RemeshOptions, RemeshReport};
pub use transfer::{transfer, TransferMap};

use crate::error::{Error, Result};
use crate::estimator::EstimatorReport;
use crate::linalg::{log_euclidean_mean, Sym2, Vec2};
use crate::mesh::{Triangulation, REFERENCE_AREA};
use crate::par;

/// Relative threshold below which `θ₂` is treated as vanishing.
const DEGENERATE_RATIO: f64 = 1e-14;
/// Floor of `θ₂/θ₁` after regularization.
const MIN_THETA_RATIO: f64 = 1e-6;

/// The matrix `Γ_T = γ̄²Ḡ(u) + ρ̄²Ḡ(v)` with its eigen-decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMatrix {
    pub gamma: Sym2,
    /// `θ₁ ≥ θ₂`.
    pub theta: [f64; 2],
    pub vectors: [Vec2; 2],
    pub gamma_bar: f64,
    pub rho_bar: f64,
}

impl GammaMatrix {
    pub fn from_matrix(gamma: Sym2) -> Self {
        let e = gamma.eigen();
        GammaMatrix {
            gamma,
            theta: e.values,
            vectors: e.vectors,
            gamma_bar: f64::NAN,
            rho_bar: f64::NAN,
        }
    }

    /// Scaled matrix of element `t`: weights and recovery matrices are divided by
    /// `(|T̂|σ₁σ₂)^{1/2}` and `|T̂|σ₁σ₂` respectively.
    pub fn from_report(report: &EstimatorReport, t: usize) -> Self {
        let map = &report.maps[t];
        let area = REFERENCE_AREA * map.sigma[0] * map.sigma[1];
        let gamma_bar = report.gamma[t] / area.sqrt();
        let rho_bar = report.rho[t] / area.sqrt();
        let g = report.g_u[t] * (gamma_bar * gamma_bar / area)
            + report.g_v[t] * (rho_bar * rho_bar / area);
        GammaMatrix {
            gamma_bar,
            rho_bar,
            ..GammaMatrix::from_matrix(g)
        }
    }
}

/// `Υ(s, r₁) = (s r₁ᵀΓr₁ + s⁻¹ r₂ᵀΓr₂)^{1/2}` with `r₂ ⟂ r₁`.
pub fn upsilon(gamma: &Sym2, s: f64, r1: Vec2) -> f64 {
    let r2 = [-r1[1], r1[0]];
    (s * gamma.quad(r1) + gamma.quad(r2) / s).max(0.0).sqrt()
}

/// Minimizer of `Υ` over `s ≥ 1` and unit `r₁`: `s* = (θ₁/θ₂)^{1/2}` and `r₁*`
/// the eigenvector of the smaller eigenvalue. Requires `θ₂ > 0`.
pub fn optimal_shape(g: &GammaMatrix) -> (f64, Vec2) {
    let [t1, t2] = g.theta;
    if t1 == t2 {
        return (1.0, [1.0, 0.0]);
    }
    ((t1 / t2).sqrt(), g.vectors[1])
}

/// Equidistributed lengths `σ*₁ ≥ σ*₂` for accuracy `tol` over `n` elements.
pub fn optimal_lengths(g: &GammaMatrix, tol: f64, n: usize) -> (f64, f64) {
    let [t1, t2] = g.theta;
    let c = tol / (std::f64::consts::SQRT_2 * REFERENCE_AREA * n as f64);
    (
        (c * (t1 / (t2 * t2)).sqrt()).cbrt(),
        (c * (t2 / (t1 * t1)).sqrt()).cbrt(),
    )
}

/// Size bounds of the metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricOptions {
    /// Smallest prescribed element size (`λ_max = h_min⁻²`).
    pub h_min: f64,
    /// Largest prescribed element size (`λ_min = h_max⁻²`).
    pub h_max: f64,
    /// One pass of log-Euclidean patch smoothing.
    pub smooth: bool,
}

impl MetricOptions {
    pub fn new(h_min: f64, h_max: f64) -> Result<Self> {
        if !(h_min > 0.0 && h_max >= h_min && h_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "metric size bounds must satisfy 0 < h_min <= h_max (got {h_min}, {h_max})"
            )));
        }
        Ok(MetricOptions {
            h_min,
            h_max,
            smooth: true,
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.h_max.powi(-2)
    }

    pub fn lambda_max(&self) -> f64 {
        self.h_min.powi(-2)
    }
}

/// Piecewise-constant metric `𝓜|_T = Σᵢ r*ᵢ r*ᵢᵀ / σ*ᵢ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    pub tensors: Vec<Sym2>,
}

impl MetricField {
    pub fn constant(mesh: &Triangulation, m: Sym2) -> Self {
        MetricField {
            tensors: vec![m; mesh.n_triangles()],
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Area-weighted log-Euclidean vertex averages, returned as logarithms.
    pub fn vertex_logs(&self, mesh: &Triangulation) -> Result<Vec<Sym2>> {
        if self.tensors.len() != mesh.n_triangles() {
            return Err(Error::MeshMismatch(
                "metric size differs from triangle count".into(),
            ));
        }
        let logs: Vec<Sym2> = par::map_range(self.tensors.len(), |t| self.tensors[t].log());
        Ok(par::map_range(mesh.n_vertices(), |v| {
            let mut acc = Sym2::ZERO;
            let mut w = 0.0;
            for &t in mesh.vertex_triangles(v) {
                let a = mesh.area(t);
                acc = acc + logs[t] * a;
                w += a;
            }
            acc * (1.0 / w)
        }))
    }

    /// One line `element_id m11 m12 m22` per element.
    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for (t, m) in self.tensors.iter().enumerate() {
            writeln!(out, "{t} {:.16e} {:.16e} {:.16e}", m.xx, m.xy, m.yy)?;
        }
        Ok(())
    }
}

/// Metric of one element from its scaled `Γ_T`, before smoothing.
pub fn element_metric(g: &GammaMatrix, tol: f64, n: usize, opts: &MetricOptions) -> Sym2 {
    let (lmin, lmax) = (opts.lambda_min(), opts.lambda_max());
    let [t1, t2] = g.theta;
    if !(t1 > 0.0) || !t1.is_finite() {
        return Sym2::identity() * lmin;
    }
    let mut g = *g;
    if t2 <= DEGENERATE_RATIO * t1 || t2 < MIN_THETA_RATIO * t1 {
        g.theta[1] = t2.max(MIN_THETA_RATIO * t1);
    }
    let (_, r1) = optimal_shape(&g);
    let (s1, s2) = optimal_lengths(&g, tol, n);
    let r2 = [-r1[1], r1[0]];
    let clamp = |s: f64| (1.0 / (s * s)).clamp(lmin, lmax);
    Sym2::from_eigen([clamp(s1), clamp(s2)], [r1, r2])
}

/// Metric field from an estimator report, with eigenvalue clamping and one
/// pass of patch smoothing (log-Euclidean mean with the patch, weight ½).
pub fn build_metric(
    report: &EstimatorReport,
    mesh: &Triangulation,
    tol: f64,
    opts: &MetricOptions,
) -> Result<MetricField> {
    let n = mesh.n_triangles();
    if report.len() != n {
        return Err(Error::MeshMismatch(
            "estimator report size differs from triangle count".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "adaptation tolerance must be positive (got {tol})"
        )));
    }
    let raw = par::map_range(n, |t| {
        element_metric(&GammaMatrix::from_report(report, t), tol, n, opts)
    });
    if !opts.smooth {
        return Ok(MetricField { tensors: raw });
    }
    let logs: Vec<Sym2> = par::map_range(n, |t| raw[t].log());
    let tensors = par::map_range(n, |t| {
        let patch = mesh.patch(t);
        let others = patch.len() - 1;
        if others == 0 {
            return raw[t];
        }
        let mut mean = Sym2::ZERO;
        for &k in patch.iter().filter(|&&k| k != t) {
            mean = mean + logs[k];
        }
        log_euclidean_mean(&[(0.5, logs[t]), (0.5, mean * (1.0 / others as f64))])
    });
    Ok(MetricField { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use approx::assert_relative_eq;

    #[test]
    fn isotropic_gamma_gives_canonical_direction() {
        let (s, r) = optimal_shape(&GammaMatrix::from_matrix(Sym2::identity()));
        assert_eq!(s, 1.0);
        assert_eq!(r, [1.0, 0.0]);
    }

    #[test]
    fn diagonal_gamma_uses_minor_eigenvector() {
        let (s, r) = optimal_shape(&GammaMatrix::from_matrix(Sym2::diag(4.0, 1.0)));
        assert_relative_eq!(s, 2.0, max_relative = 1e-15);
        assert!(r[0].abs() < 1e-15 && (r[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isotropic_lengths_and_scaling() {
        let g = GammaMatrix::from_matrix(Sym2::identity() * 2.5);
        let (a, b) = optimal_lengths(&g, 1e-3, 100);
        let expected = (1e-3 / (2f64.sqrt() * REFERENCE_AREA * 100.0 * 2.5f64.sqrt())).cbrt();
        assert_relative_eq!(a, expected, max_relative = 1e-14);
        assert_relative_eq!(b, expected, max_relative = 1e-14);
        let (a2, _) = optimal_lengths(&g, 1e-3, 200);
        assert_relative_eq!(a2, a * 2f64.powf(-1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn zero_gamma_falls_back_to_largest_size() {
        let opts = MetricOptions::new(0.01, 0.2).unwrap();
        let m = element_metric(&GammaMatrix::from_matrix(Sym2::ZERO), 1e-3, 10, &opts);
        assert_relative_eq!(m.xx, 25.0, max_relative = 1e-14);
        assert_relative_eq!(m.yy, 25.0, max_relative = 1e-14);
        assert_eq!(m.xy, 0.0);
    }

    #[test]
    fn clamping_bounds_eigenvalues() {
        let opts = MetricOptions::new(0.01, 0.2).unwrap();
        let m = element_metric(
            &GammaMatrix::from_matrix(Sym2::diag(1e12, 1.0)),
            1e-3,
            10,
            &opts,
        );
        let e = m.eigen();
        assert!(e.values[0] <= opts.lambda_max() * (1.0 + 1e-12));
        assert!(e.values[1] >= opts.lambda_min() * (1.0 - 1e-12));
    }

    #[test]
    fn vertex_logs_of_constant_metric() {
        let mesh = Triangulation::structured_rect(Rect::unit(), 3, 2).unwrap();
        let m = Sym2::new(4.0, 1.0, 9.0);
        let logs = MetricField::constant(&mesh, m).vertex_logs(&mesh).unwrap();
        for l in logs {
            let back = l.exp();
            assert!((back - m).max_abs() < 1e-12);
        }
    }
}
