//! Surface charts and the coefficient fields of the dimension-reduced model.
//!
//! A chart maps a planar domain ω to the mid-surface of the shell. Everything the
//! reduced energy needs is expressed through four pointwise quantities:
//!
//! * the area weight `√a = √det(a_αβ)`,
//! * the anisotropy matrix `A = (a^αβ) √a`,
//! * the curvature coefficient `b = c^αβστ b_αβ b_στ √a`, with the reduced
//!   elasticity tensor `c^αβστ = 2λμ/(λ+2μ) a^αβ a^στ + μ (a^ασ a^βτ + a^ατ a^βσ)`,
//! * `div A` (row-wise), which enters the element residuals of the estimator.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Sym2, Vec2};

pub type Vec3 = [f64; 3];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

/// User-supplied chart. Only the metric, curvature and embedding are required;
/// `div A` is then obtained by central differences.
pub trait CustomChart: Send + Sync {
    /// Covariant metric `a_αβ` at `x`.
    fn metric(&self, x: Vec2) -> Sym2;
    /// Covariant curvature tensor `b_αβ` at `x`.
    fn curvature(&self, x: Vec2) -> Sym2;
    /// Mid-surface point `φ(x)`.
    fn embed(&self, x: Vec2) -> Vec3;
    /// Unit normal `a₃(x)`.
    fn normal(&self, x: Vec2) -> Vec3;
    /// Whether `x` lies in the region where the chart is regular.
    fn is_valid(&self, _x: Vec2) -> bool {
        true
    }
}

#[derive(Clone)]
pub enum ChartKind {
    Flat,
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64, xbar: f64, ybar: f64 },
    Custom(Arc<dyn CustomChart>),
}

impl fmt::Debug for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartKind::Flat => write!(f, "Flat"),
            ChartKind::Cylinder { radius, length } => {
                write!(f, "Cylinder {{ radius: {radius}, length: {length} }}")
            }
            ChartKind::Sphere { radius, xbar, ybar } => {
                write!(
                    f,
                    "Sphere {{ radius: {radius}, xbar: {xbar}, ybar: {ybar} }}"
                )
            }
            ChartKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Immutable chart description together with the Lamé parameters.
#[derive(Clone, Debug)]
pub struct SurfaceChart {
    pub kind: ChartKind,
    pub lame_lambda: f64,
    pub lame_mu: f64,
    pub domain: Rect,
}

/// Everything the quadrature loops need at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartEval {
    pub a_cov: Sym2,
    pub a_contra: Sym2,
    pub sqrt_a: f64,
    pub b_cov: Sym2,
    /// `A = a_contra · √a`.
    pub aniso: Sym2,
    /// Zeroth-order coefficient `b`.
    pub b_coeff: f64,
    /// `(div A)_i = Σ_j ∂_j A_ij`.
    pub div_a: Vec2,
    pub grad_sqrt_a: Vec2,
}

const FD_STEP: f64 = 1e-6;

fn check_lame(lambda: f64, mu: f64) -> Result<()> {
    if !(mu > 0.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Lamé parameters must satisfy λ ≥ 0, μ > 0 (got λ = {lambda}, μ = {mu})"
        )));
    }
    Ok(())
}

impl SurfaceChart {
    pub fn flat(domain: Rect) -> Self {
        SurfaceChart {
            kind: ChartKind::Flat,
            lame_lambda: 0.0,
            lame_mu: 1.0,
            domain,
        }
    }

    /// Cylinder of radius `r`, chart domain `(−π/2, π/2) × (0, l)`.
    pub fn cylinder(r: f64, l: f64) -> Result<Self> {
        if !(r > 0.0) || !(l > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cylinder needs R > 0 and L > 0 (got R = {r}, L = {l})"
            )));
        }
        Ok(SurfaceChart {
            kind: ChartKind::Cylinder {
                radius: r,
                length: l,
            },
            lame_lambda: 0.0,
            lame_mu: 1.0,
            domain: Rect::new(-FRAC_PI_2, FRAC_PI_2, 0.0, l),
        })
    }

    /// Sphere of radius `r`, chart domain `(−x̄, x̄) × (−ȳ, ȳ)` in longitude/latitude.
    pub fn sphere(r: f64, xbar: f64, ybar: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sphere needs R > 0 (got {r})"
            )));
        }
        if !(xbar > 0.0 && xbar < std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!(
                "sphere needs 0 < x̄ < π (got {xbar})"
            )));
        }
        if !(ybar > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sphere needs ȳ > 0 (got {ybar})"
            )));
        }
        if ybar >= FRAC_PI_2 {
            return Err(Error::ChartDegeneracy(format!(
                "ȳ = {ybar} reaches the pole where cos y vanishes"
            )));
        }
        Ok(SurfaceChart {
            kind: ChartKind::Sphere {
                radius: r,
                xbar,
                ybar,
            },
            lame_lambda: 0.0,
            lame_mu: 1.0,
            domain: Rect::new(-xbar, xbar, -ybar, ybar),
        })
    }

    pub fn custom(chart: Arc<dyn CustomChart>, domain: Rect) -> Self {
        SurfaceChart {
            kind: ChartKind::Custom(chart),
            lame_lambda: 0.0,
            lame_mu: 1.0,
            domain,
        }
    }

    pub fn with_lame(mut self, lambda: f64, mu: f64) -> Result<Self> {
        check_lame(lambda, mu)?;
        self.lame_lambda = lambda;
        self.lame_mu = mu;
        Ok(self)
    }

    pub fn with_domain(mut self, domain: Rect) -> Self {
        self.domain = domain;
        self
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ChartKind::Flat)
    }

    fn is_valid(&self, x: Vec2) -> bool {
        if !(x[0].is_finite() && x[1].is_finite()) {
            return false;
        }
        match &self.kind {
            ChartKind::Flat | ChartKind::Cylinder { .. } => true,
            ChartKind::Sphere { .. } => x[1].abs() < FRAC_PI_2,
            ChartKind::Custom(c) => c.is_valid(x),
        }
    }

    /// Metric, curvature and their derived coefficient fields at `x`.
    pub fn eval(&self, x: Vec2) -> Result<ChartEval> {
        if !self.is_valid(x) {
            return Err(Error::OutsideChart { x: x[0], y: x[1] });
        }
        let (a_cov, b_cov, div_a, grad_sqrt_a) = match &self.kind {
            ChartKind::Flat => (Sym2::identity(), Sym2::ZERO, [0.0; 2], [0.0; 2]),
            ChartKind::Cylinder { radius: r, .. } => (
                Sym2::diag(r * r, 1.0),
                Sym2::diag(-r, 0.0),
                [0.0; 2],
                [0.0; 2],
            ),
            ChartKind::Sphere { radius: r, .. } => {
                let (s, c) = x[1].sin_cos();
                // A = diag(1/cos y, cos y); only A₂₂ varies, with ∂_y A₂₂ = −sin y.
                (
                    Sym2::diag(r * r * c * c, r * r),
                    Sym2::diag(-r * c * c, -r),
                    [0.0, -s],
                    [0.0, -r * r * s],
                )
            }
            ChartKind::Custom(chart) => {
                let a_cov = chart.metric(x);
                let b_cov = chart.curvature(x);
                let (div_a, grad_sqrt_a) = self.fd_derivatives(chart.as_ref(), x);
                (a_cov, b_cov, div_a, grad_sqrt_a)
            }
        };
        let det = a_cov.det();
        if !(det > 0.0) {
            return Err(Error::ChartDegeneracy(format!(
                "metric is not positive definite at ({}, {})",
                x[0], x[1]
            )));
        }
        let sqrt_a = det.sqrt();
        let a_contra = a_cov.inverse().expect("positive determinant");
        let aniso = a_contra * sqrt_a;
        let b_coeff = self.curvature_coefficient(&a_contra, &b_cov) * sqrt_a;
        Ok(ChartEval {
            a_cov,
            a_contra,
            sqrt_a,
            b_cov,
            aniso,
            b_coeff,
            div_a,
            grad_sqrt_a,
        })
    }

    /// `c^αβστ b_αβ b_στ`. Writing `S = a⁻¹ b`, the contraction collapses to
    /// `2λμ/(λ+2μ) (tr S)² + 2μ tr(S²)`.
    fn curvature_coefficient(&self, a_contra: &Sym2, b_cov: &Sym2) -> f64 {
        let (l, m) = (self.lame_lambda, self.lame_mu);
        // S = a_contra · b_cov (not symmetric in general).
        let s11 = a_contra.xx * b_cov.xx + a_contra.xy * b_cov.xy;
        let s12 = a_contra.xx * b_cov.xy + a_contra.xy * b_cov.yy;
        let s21 = a_contra.xy * b_cov.xx + a_contra.yy * b_cov.xy;
        let s22 = a_contra.xy * b_cov.xy + a_contra.yy * b_cov.yy;
        let tr = s11 + s22;
        let tr_sq = s11 * s11 + 2.0 * s12 * s21 + s22 * s22;
        2.0 * l * m / (l + 2.0 * m) * tr * tr + 2.0 * m * tr_sq
    }

    fn fd_derivatives(&self, chart: &dyn CustomChart, x: Vec2) -> (Vec2, Vec2) {
        let aniso_at = |p: Vec2| {
            let a = chart.metric(p);
            let s = a.det().sqrt();
            (a.inverse().unwrap_or(Sym2::ZERO) * s, s)
        };
        let h = FD_STEP;
        let (ax_p, sx_p) = aniso_at([x[0] + h, x[1]]);
        let (ax_m, sx_m) = aniso_at([x[0] - h, x[1]]);
        let (ay_p, sy_p) = aniso_at([x[0], x[1] + h]);
        let (ay_m, sy_m) = aniso_at([x[0], x[1] - h]);
        let dx = (ax_p - ax_m) * (0.5 / h);
        let dy = (ay_p - ay_m) * (0.5 / h);
        let div_a = [dx.xx + dy.xy, dx.xy + dy.yy];
        let grad = [(sx_p - sx_m) * 0.5 / h, (sy_p - sy_m) * 0.5 / h];
        (div_a, grad)
    }

    /// Mid-surface point `φ(x)`.
    pub fn embed(&self, x: Vec2) -> Vec3 {
        match &self.kind {
            ChartKind::Flat => [x[0], x[1], 0.0],
            ChartKind::Cylinder { radius: r, .. } => {
                let (s, c) = x[0].sin_cos();
                [r * c, r * s, x[1]]
            }
            ChartKind::Sphere { radius: r, .. } => {
                let (sx, cx) = x[0].sin_cos();
                let (sy, cy) = x[1].sin_cos();
                [r * cx * cy, r * sx * cy, r * sy]
            }
            ChartKind::Custom(c) => c.embed(x),
        }
    }

    /// Unit normal `a₃ = a₁ × a₂ / |a₁ × a₂|`.
    pub fn normal(&self, x: Vec2) -> Vec3 {
        match &self.kind {
            ChartKind::Flat => [0.0, 0.0, 1.0],
            ChartKind::Cylinder { .. } => {
                let (s, c) = x[0].sin_cos();
                [c, s, 0.0]
            }
            ChartKind::Sphere { .. } => {
                let (sx, cx) = x[0].sin_cos();
                let (sy, cy) = x[1].sin_cos();
                [cx * cy, sx * cy, sy]
            }
            ChartKind::Custom(c) => c.normal(x),
        }
    }
}
