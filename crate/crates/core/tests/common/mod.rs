//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use shellfrac::geometry::Rect;
use shellfrac::mesh::Triangulation;
use shellfrac::sparse::CsrMatrix;

/// Structured mesh of `rect` whose interior vertices are displaced by up to
/// `jitter` times the local spacing.
pub fn jittered_mesh(
    rect: Rect,
    nx: usize,
    ny: usize,
    jitter: f64,
    rng: &mut impl Rng,
) -> Triangulation {
    let base = Triangulation::structured_rect(rect, nx, ny).unwrap();
    let (hx, hy) = (rect.width() / nx as f64, rect.height() / ny as f64);
    let on_boundary: Vec<bool> = {
        let mut b = vec![false; base.n_vertices()];
        for e in base.boundary_edges() {
            b[e.v[0]] = true;
            b[e.v[1]] = true;
        }
        b
    };
    let pts = base
        .vertices()
        .iter()
        .zip(&on_boundary)
        .map(|(p, &b)| {
            if b {
                *p
            } else {
                [
                    p[0] + jitter * hx * rng.gen_range(-1.0..1.0),
                    p[1] + jitter * hy * rng.gen_range(-1.0..1.0),
                ]
            }
        })
        .collect();
    Triangulation::new(
        pts,
        base.triangles().to_vec(),
        base.boundary_edges().to_vec(),
    )
    .unwrap()
}

pub fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.n(), a.n(), |i, j| d[i][j])
}

/// Random symmetric positive definite matrix `BᵀB + shift·I`.
pub fn random_spd(n: usize, shift: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    b.transpose() * &b + DMatrix::identity(n, n) * shift
}

pub fn to_csr(h: &DMatrix<f64>) -> CsrMatrix {
    let rows: Vec<Vec<f64>> = (0..h.nrows())
        .map(|i| (0..h.ncols()).map(|j| h[(i, j)]).collect())
        .collect();
    CsrMatrix::from_dense(&rows)
}

/// Minimizer of `½xᵀHx − cᵀx` subject to `x ≤ ub` by enumerating all active
/// sets and keeping the best KKT-feasible candidate.
pub fn brute_force_qp(h: &DMatrix<f64>, c: &[f64], ub: &[f64]) -> Vec<f64> {
    let n = c.len();
    assert!(n <= 16);
    let objective = |x: &DVector<f64>| {
        0.5 * x.dot(&(h * x)) - c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let active: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut x = DVector::from_fn(n, |i, _| if active[i] { ub[i] } else { 0.0 });
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                c[i] - (0..n)
                    .filter(|&j| active[j])
                    .map(|j| h[(i, j)] * ub[j])
                    .sum::<f64>()
            });
            let Some(chol) = hff.cholesky() else { continue };
            let xf = chol.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                x[i] = xf[a];
            }
        }
        let feasible = (0..n).all(|i| x[i] <= ub[i] + 1e-12);
        let g = h * &x - DVector::from_column_slice(c);
        let dual_ok = (0..n).all(|i| !active[i] || g[i] <= 1e-12);
        if feasible && dual_ok {
            let f = objective(&x);
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, x));
            }
        }
    }
    best.expect("strictly convex QP has a KKT point")
        .1
        .iter()
        .copied()
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub mod criteria;
