use super::Triangulation;
use crate::linalg::{cross, dot, sub, Vec2};

/// Uniform-grid point location on a triangulation.
pub struct Locator<'a> {
    mesh: &'a Triangulation,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
pub fn barycentric(p: Vec2, [a, b, c]: [Vec2; 3]) -> [f64; 3] {
    let d = cross(sub(b, a), sub(c, a));
    let l1 = cross(sub(b, p), sub(c, p)) / d;
    let l2 = cross(sub(c, p), sub(a, p)) / d;
    [l1, l2, 1.0 - l1 - l2]
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = sub(b, a);
    let len2 = dot(d, d);
    let s = if len2 > 0.0 {
        (dot(sub(p, a), d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + s * d[0], a[1] + s * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Triangulation) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in mesh.vertices() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let w = (hi[0] - lo[0]).max(1e-300);
        let h = (hi[1] - lo[1]).max(1e-300);
        let target = (mesh.n_triangles() as f64).max(1.0);
        let cell = ((w * h) / target).sqrt().max(w.max(h) / 4096.0);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((h / cell).ceil() as usize).max(1);
        let mut loc = Locator {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            ptr: Vec::new(),
            idx: Vec::new(),
        };
        let ranges: Vec<_> = (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.corners(t);
                let bx0 = c.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let bx1 = c.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                let by0 = c.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
                let by1 = c.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
                let (i0, j0) = loc.cell_of([bx0, by0]);
                let (i1, j1) = loc.cell_of([bx1, by1]);
                (i0, i1, j0, j1)
            })
            .collect();
        let mut counts = vec![0usize; nx * ny + 1];
        for &(i0, i1, j0, j1) in &ranges {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
        }
        for c in 0..nx * ny {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut idx = vec![0; counts[nx * ny]];
        for (t, &(i0, i1, j0, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    idx[fill[c]] = t;
                    fill[c] += 1;
                }
            }
        }
        loc.ptr = counts;
        loc.idx = idx;
        loc
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let i = fx.clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = fy.clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    fn bucket(&self, i: usize, j: usize) -> &[usize] {
        let c = j * self.nx + i;
        &self.idx[self.ptr[c]..self.ptr[c + 1]]
    }

    /// Containing triangle and barycentric coordinates; among several candidates
    /// (points on shared edges) the one with the largest minimum coordinate wins.
    pub fn locate(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.cell_of(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in self.bucket(i, j) {
            let l = barycentric(p, self.mesh.corners(t));
            let m = l[0].min(l[1]).min(l[2]);
            if m >= -1e-12 && best.is_none_or(|b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        best.map(|(t, l, _)| (t, l))
    }

    /// Like [`Locator::locate`], but points within `tol` of the mesh are
    /// snapped onto the nearest triangle. Returned coordinates are clamped to be
    /// nonnegative and sum to one.
    pub fn locate_snapped(&self, p: Vec2, tol: f64) -> Option<(usize, [f64; 3])> {
        if let Some((t, l)) = self.locate(p) {
            return Some((t, clamp_barycentric(l)));
        }
        let (i0, j0) = self.cell_of([p[0] - tol, p[1] - tol]);
        let (i1, j1) = self.cell_of([p[0] + tol, p[1] + tol]);
        let mut best: Option<(usize, f64)> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &t in self.bucket(i, j) {
                    let [a, b, c] = self.mesh.corners(t);
                    let d = point_segment_distance(p, a, b)
                        .min(point_segment_distance(p, b, c))
                        .min(point_segment_distance(p, c, a));
                    if d <= tol && best.is_none_or(|x| d < x.1) {
                        best = Some((t, d));
                    }
                }
            }
        }
        best.map(|(t, _)| (t, clamp_barycentric(barycentric(p, self.mesh.corners(t)))))
    }
}

pub fn clamp_barycentric(l: [f64; 3]) -> [f64; 3] {
    let c = l.map(|x| x.max(0.0));
    let s = c[0] + c[1] + c[2];
    if s > 0.0 {
        c.map(|x| x / s)
    } else {
        [1.0 / 3.0; 3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn locates_interior_points_and_snaps_outside() {
        let m = Triangulation::structured_rect(Rect::unit(), 5, 3).unwrap();
        let loc = Locator::new(&m);
        for &p in &[
            [0.13, 0.77],
            [0.5, 0.5],
            [0.999, 0.001],
            [0.0, 0.0],
            [1.0, 1.0],
        ] {
            let (t, l) = loc.locate(p).unwrap();
            let c = m.corners(t);
            let q = [
                l[0] * c[0][0] + l[1] * c[1][0] + l[2] * c[2][0],
                l[0] * c[0][1] + l[1] * c[1][1] + l[2] * c[2][1],
            ];
            assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
        }
        assert!(loc.locate([1.0 + 1e-10, 0.5]).is_none());
        let (_, l) = loc.locate_snapped([1.0 + 1e-10, 0.5], 1e-9).unwrap();
        assert!(l.iter().all(|&x| x >= 0.0));
        assert!(loc.locate_snapped([1.1, 0.5], 1e-9).is_none());
    }
}
