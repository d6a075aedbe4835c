use super::Triangulation;
use crate::error::Result;
use crate::geometry::SurfaceChart;
use crate::linalg::Sym2;

/// Outcome of the non-positivity test on the off-diagonal stiffness entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StiffnessReport {
    /// Edge-sharing vertex pairs `(l, m)`, `l < m`, with `K_lm > tol`, and the value.
    pub violations: Vec<(usize, usize, f64)>,
    /// `max(0, max_{l≠m} K_lm)`.
    pub max_positive_off_diagonal: f64,
    /// Threshold used, `10⁻¹⁰ · max |K|`.
    pub tolerance: f64,
}

impl StiffnessReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Assembles `K_lm = ∫ ∇ξ_lᵀ A ∇ξ_m` (edge-midpoint rule) and reports every
/// edge whose entry is positive beyond round-off.
pub fn check_stiffness_sign(mesh: &Triangulation, chart: &SurfaceChart) -> Result<StiffnessReport> {
    let mut off = vec![0.0; mesh.edges().len()];
    let mut diag = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.corners(t);
        let mut a_bar = Sym2::ZERO;
        for (p, q) in [(p0, p1), (p1, p2), (p2, p0)] {
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            a_bar = a_bar + chart.eval(mid)?.aniso;
        }
        a_bar = a_bar * (mesh.area(t) / 3.0);
        let g = mesh.basis_gradients(t);
        let tri = mesh.triangle(t);
        let edges = mesh.triangle_edges(t);
        for k in 0..3 {
            diag[tri[k]] += a_bar.quad(g[k]);
            // Edge opposite k joins the other two local vertices.
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            off[edges[k]] += a_bar.bilinear(g[i], g[j]);
        }
    }
    let max_abs = off
        .iter()
        .chain(diag.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let tolerance = 1e-10 * max_abs;
    let mut report = StiffnessReport {
        tolerance,
        ..Default::default()
    };
    for (e, &k) in off.iter().enumerate() {
        report.max_positive_off_diagonal = report.max_positive_off_diagonal.max(k);
        if k > tolerance {
            let [a, b] = mesh.edges()[e].v;
            report.violations.push((a, b, k));
        }
    }
    Ok(report)
}
