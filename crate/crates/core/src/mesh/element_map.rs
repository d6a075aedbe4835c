use crate::linalg::{norm, sub, Mat2, Vec2};

/// Area of the reference triangle: the equilateral triangle inscribed in the
/// unit circle with vertices `(−√3/2, −1/2)`, `(√3/2, −1/2)`, `(0, 1)`.
pub const REFERENCE_AREA: f64 = 1.299_038_105_676_658; // 3√3/4

/// Affine map `x = M ẑ + θ` from the reference triangle onto an element,
/// together with its singular value decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementMap {
    pub m: Mat2,
    pub theta: Vec2,
    /// `sigma[0] >= sigma[1] > 0`.
    pub sigma: [f64; 2],
    /// Left singular vectors `r₁`, `r₂` (directions of stretching in ω).
    pub r: [Vec2; 2],
    /// Right singular vectors.
    pub v: [Vec2; 2],
    pub aspect_ratio: f64,
    pub h: f64,
}

impl ElementMap {
    /// Returns `None` for degenerate (zero-area) input.
    pub fn new(p: [Vec2; 3]) -> Option<Self> {
        let [[x1, y1], [x2, y2], [x3, y3]] = p;
        let s3 = 3f64.sqrt();
        let m = Mat2([
            [s3 * (x2 - x1) / 3.0, (2.0 * x3 - x1 - x2) / 3.0],
            [s3 * (y2 - y1) / 3.0, (2.0 * y3 - y1 - y2) / 3.0],
        ]);
        let theta = [(x1 + x2 + x3) / 3.0, (y1 + y2 + y3) / 3.0];
        let svd = m.svd();
        if !(svd.sigma[1] > 1e-14 * svd.sigma[0]) || !svd.sigma[0].is_finite() {
            return None;
        }
        let h = norm(sub(p[1], p[0]))
            .max(norm(sub(p[2], p[1])))
            .max(norm(sub(p[0], p[2])));
        Some(ElementMap {
            m,
            theta,
            sigma: svd.sigma,
            r: svd.u,
            v: svd.v,
            aspect_ratio: svd.sigma[0] / svd.sigma[1],
            h,
        })
    }

    /// Maps a reference point into the element.
    pub fn apply(&self, z: Vec2) -> Vec2 {
        let w = self.m.apply(z);
        [w[0] + self.theta[0], w[1] + self.theta[1]]
    }
}
