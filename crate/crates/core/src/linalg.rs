//! Small dense 2×2 algebra used throughout the element loops.

use std::ops::{Add, Mul, Sub};

pub type Vec2 = [f64; 2];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// z-component of the cross product, i.e. twice the signed area of (0, a, b).
#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// Eigen-decomposition of a [`Sym2`] with `values[0] >= values[1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen {
    pub values: [f64; 2],
    pub vectors: [Vec2; 2],
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub const fn identity() -> Self {
        Sym2::new(1.0, 0.0, 1.0)
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Sym2::new(a, 0.0, b)
    }

    pub fn outer(v: Vec2) -> Self {
        Sym2::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Sym2::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `aᵀ S b`.
    pub fn bilinear(&self, a: Vec2, b: Vec2) -> f64 {
        dot(a, self.apply(b))
    }

    /// `vᵀ S v`.
    pub fn quad(&self, v: Vec2) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    pub fn scale(&self, s: f64) -> Self {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Eigenpairs ordered by decreasing eigenvalue. The rotation angle is taken
    /// from `atan2(2 xy, xx - yy)`, so an isotropic matrix yields the canonical
    /// basis `(1, 0), (0, 1)`.
    pub fn eigen(&self) -> SymEigen {
        let theta = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        let (s, c) = theta.sin_cos();
        let v1 = [c, s];
        let v2 = [-s, c];
        let l1 = self.quad(v1);
        let l2 = self.quad(v2);
        if l1 >= l2 {
            SymEigen {
                values: [l1, l2],
                vectors: [v1, v2],
            }
        } else {
            SymEigen {
                values: [l2, l1],
                vectors: [v2, [s, -c]],
            }
        }
    }

    /// Rebuilds `Σ λᵢ vᵢ vᵢᵀ`.
    pub fn from_eigen(values: [f64; 2], vectors: [Vec2; 2]) -> Self {
        Sym2::outer(vectors[0]).scale(values[0]) + Sym2::outer(vectors[1]).scale(values[1])
    }

    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Self {
        let e = self.eigen();
        Sym2::from_eigen([f(e.values[0]), f(e.values[1])], e.vectors)
    }

    /// Matrix logarithm; only meaningful for SPD input.
    pub fn log(&self) -> Self {
        self.map_eigenvalues(f64::ln)
    }

    pub fn exp(&self) -> Self {
        self.map_eigenvalues(f64::exp)
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        self.scale(s)
    }
}

/// General 2×2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// `M = U Σ Vᵀ` with `sigma[0] >= sigma[1] >= 0`. Columns of `u` / `v` are the
/// left / right singular vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd2 {
    pub u: [Vec2; 2],
    pub sigma: [f64; 2],
    pub v: [Vec2; 2],
}

impl Mat2 {
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn apply(&self, z: Vec2) -> Vec2 {
        let m = &self.0;
        [
            m[0][0] * z[0] + m[0][1] * z[1],
            m[1][0] * z[0] + m[1][1] * z[1],
        ]
    }

    pub fn transpose(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// Closed-form SVD via the rotation/reflection split
    /// `M = [[E+F, H... ]]`: with `E=(a+d)/2, F=(a−d)/2, G=(c+b)/2, H=(c−b)/2`
    /// the singular values are `Q ± R` for `Q = |(E,H)|`, `R = |(F,G)|`.
    pub fn svd(&self) -> Svd2 {
        let [[a, b], [c, d]] = self.0;
        let e = 0.5 * (a + d);
        let f = 0.5 * (a - d);
        let g = 0.5 * (c + b);
        let h = 0.5 * (c - b);
        let q = e.hypot(h);
        let r = f.hypot(g);
        let a1 = g.atan2(f);
        let a2 = h.atan2(e);
        let theta = 0.5 * (a2 - a1);
        let phi = 0.5 * (a2 + a1);
        let s1 = q + r;
        let s2 = q - r;
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let u = [[cp, sp], [-sp, cp]];
        // With s2 < 0 (orientation-reversing M) flip the second right vector.
        let sign = if s2 < 0.0 { -1.0 } else { 1.0 };
        let v = [[ct, -st], [sign * st, sign * ct]];
        Svd2 {
            u,
            sigma: [s1, s2.abs()],
            v,
        }
    }
}

impl Svd2 {
    pub fn reconstruct(&self) -> Mat2 {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, mij) in row.iter_mut().enumerate() {
                *mij = self.u[0][i] * self.sigma[0] * self.v[0][j]
                    + self.u[1][i] * self.sigma[1] * self.v[1][j];
            }
        }
        Mat2(m)
    }
}

/// Log-Euclidean weighted mean of SPD tensors given by their logarithms.
pub fn log_euclidean_mean(logs: &[(f64, Sym2)]) -> Sym2 {
    let mut acc = Sym2::ZERO;
    let mut wsum = 0.0;
    for &(w, l) in logs {
        acc = acc + l * w;
        wsum += w;
    }
    (acc * (1.0 / wsum)).exp()
}
