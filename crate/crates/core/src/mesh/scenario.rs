//! Initial meshes of notched, holed and extended chart domains.

use std::f64::consts::PI;

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation as _,
};

use super::{BoundaryEdge, BoundaryLabel, Triangulation};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::linalg::{cross, dot, norm, sub, Vec2};

/// Circular hole in the chart domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    /// Vertex count used when the circle is polygonized at size `h`.
    pub fn segments(&self, h: f64) -> usize {
        ((2.0 * PI * self.radius / h).ceil() as usize).max(8)
    }

    pub fn polygon(&self, h: f64) -> Vec<Vec2> {
        let n = self.segments(h);
        (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                [
                    self.center[0] + self.radius * a.cos(),
                    self.center[1] + self.radius * a.sin(),
                ]
            })
            .collect()
    }
}

/// Notch rectangle; thin notches are meshed as a slit along the long axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotchSpec {
    pub rect: Rect,
}

/// Below this mesh size the notch is cut out as a rectangle instead of a slit.
pub const SLIT_THRESHOLD: f64 = 4e-3;

impl NotchSpec {
    /// Centre line of the notch along its longer side.
    pub fn slit(&self) -> [Vec2; 2] {
        let r = self.rect;
        if r.height() >= r.width() {
            let x = 0.5 * (r.x0 + r.x1);
            [[x, r.y0], [x, r.y1]]
        } else {
            let y = 0.5 * (r.y0 + r.y1);
            [[r.x0, y], [r.x1, y]]
        }
    }
}

/// Straight piece of the outer boundary carrying a label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcSegment {
    pub label: BoundaryLabel,
    pub a: Vec2,
    pub b: Vec2,
}

/// Geometric description of a scenario: the chart domain, an optional
/// extension strip, notch, holes and labelled outer-boundary segments.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGeometry {
    pub domain: Rect,
    pub extension: Option<Rect>,
    pub notch: Option<NotchSpec>,
    pub holes: Vec<Circle>,
    pub bc: Vec<BcSegment>,
}

impl ScenarioGeometry {
    pub fn plain(domain: Rect) -> Self {
        ScenarioGeometry {
            domain,
            extension: None,
            notch: None,
            holes: Vec::new(),
            bc: Vec::new(),
        }
    }

    /// The meshed rectangle `domain ∪ extension`.
    pub fn outer(&self) -> Result<Rect> {
        let d = self.domain;
        let Some(e) = self.extension else {
            return Ok(d);
        };
        let tol = 1e-12 * (1.0 + d.width().max(d.height()));
        let same_x = (e.x0 - d.x0).abs() < tol && (e.x1 - d.x1).abs() < tol;
        let same_y = (e.y0 - d.y0).abs() < tol && (e.y1 - d.y1).abs() < tol;
        let touch_y = (e.y1 - d.y0).abs() < tol || (e.y0 - d.y1).abs() < tol;
        let touch_x = (e.x1 - d.x0).abs() < tol || (e.x0 - d.x1).abs() < tol;
        if (same_x && touch_y) || (same_y && touch_x) {
            Ok(Rect::new(
                d.x0.min(e.x0),
                d.x1.max(e.x1),
                d.y0.min(e.y0),
                d.y1.max(e.y1),
            ))
        } else {
            Err(Error::Geometry(
                "the extension must share a full side with the domain".into(),
            ))
        }
    }

    /// Whether the notch is meshed as a slit at size `h`.
    pub fn uses_slit(&self, h: f64) -> bool {
        self.notch.is_some() && h > SLIT_THRESHOLD
    }

    /// Number of slits that are closed curves in the interior (each one adds a
    /// boundary component).
    pub fn interior_slits(&self, h: f64) -> usize {
        match (self.notch, self.outer()) {
            (Some(n), Ok(outer)) if self.uses_slit(h) => {
                let [a, b] = n.slit();
                usize::from(outer.contains_strictly(a) && outer.contains_strictly(b))
            }
            _ => 0,
        }
    }

    /// Expected `V − E + F` of the generated mesh.
    pub fn expected_euler(&self, h: f64) -> i64 {
        let removed_notch = match (self.notch, self.outer()) {
            (Some(n), Ok(outer)) if !self.uses_slit(h) => {
                let r = n.rect;
                i64::from(
                    outer.contains_strictly([r.x0, r.y0]) && outer.contains_strictly([r.x1, r.y1]),
                )
            }
            _ => 0,
        };
        1 - self.holes.len() as i64 - self.interior_slits(h) as i64 - removed_notch
    }

    pub fn validate(&self) -> Result<()> {
        let outer = self.outer()?;
        for (k, h) in self.holes.iter().enumerate() {
            let c = h.center;
            if !(h.radius > 0.0) {
                return Err(Error::Geometry(format!("hole {k} has nonpositive radius")));
            }
            if !(c[0] - h.radius > outer.x0
                && c[0] + h.radius < outer.x1
                && c[1] - h.radius > outer.y0
                && c[1] + h.radius < outer.y1)
            {
                return Err(Error::Geometry(format!(
                    "hole {k} is not strictly inside the domain"
                )));
            }
            for (l, g) in self.holes.iter().enumerate().skip(k + 1) {
                if norm(sub(c, g.center)) <= h.radius + g.radius {
                    return Err(Error::Geometry(format!("holes {k} and {l} overlap")));
                }
            }
            if let Some(n) = self.notch {
                let r = n.rect;
                let q = [c[0].clamp(r.x0, r.x1), c[1].clamp(r.y0, r.y1)];
                if norm(sub(c, q)) <= h.radius {
                    return Err(Error::Geometry(format!("hole {k} touches the notch")));
                }
            }
        }
        if let Some(n) = self.notch {
            let r = n.rect;
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return Err(Error::Geometry("notch rectangle is empty".into()));
            }
            if !(outer.contains([r.x0, r.y0]) && outer.contains([r.x1, r.y1])) {
                return Err(Error::Geometry("notch is not inside the domain".into()));
            }
        }
        for s in &self.bc {
            if !s.label.is_dirichlet() && s.label != BoundaryLabel::Free {
                return Err(Error::Geometry(format!(
                    "boundary segment label `{}` is not allowed on the outer boundary",
                    s.label
                )));
            }
            if side_of(outer, s.a).is_none()
                || side_of(outer, s.b).is_none()
                || side_of(outer, s.a) != side_of(outer, s.b) && !same_side(outer, s.a, s.b)
            {
                return Err(Error::Geometry(
                    "boundary segments must lie on one side of the outer boundary".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which side (0 bottom, 1 right, 2 top, 3 left) of `r` contains `p`, if any.
fn side_of(r: Rect, p: Vec2) -> Option<u8> {
    let tol = 1e-12 * (1.0 + r.width().max(r.height()));
    let on_x = p[0] >= r.x0 - tol && p[0] <= r.x1 + tol;
    let on_y = p[1] >= r.y0 - tol && p[1] <= r.y1 + tol;
    if (p[1] - r.y0).abs() <= tol && on_x {
        Some(0)
    } else if (p[0] - r.x1).abs() <= tol && on_y {
        Some(1)
    } else if (p[1] - r.y1).abs() <= tol && on_x {
        Some(2)
    } else if (p[0] - r.x0).abs() <= tol && on_y {
        Some(3)
    } else {
        None
    }
}

fn same_side(r: Rect, a: Vec2, b: Vec2) -> bool {
    let tol = 1e-12 * (1.0 + r.width().max(r.height()));
    ((a[1] - b[1]).abs() <= tol && ((a[1] - r.y0).abs() <= tol || (a[1] - r.y1).abs() <= tol))
        || ((a[0] - b[0]).abs() <= tol
            && ((a[0] - r.x0).abs() <= tol || (a[0] - r.x1).abs() <= tol))
}

fn point_on_segment(p: Vec2, a: Vec2, b: Vec2, tol: f64) -> bool {
    let d = sub(b, a);
    let len = norm(d);
    if len == 0.0 {
        return norm(sub(p, a)) <= tol;
    }
    let s = dot(sub(p, a), d) / (len * len);
    s >= -tol / len && s <= 1.0 + tol / len && cross(d, sub(p, a)).abs() / len <= tol
}

fn subdivide(a: Vec2, b: Vec2, h: f64) -> Vec<Vec2> {
    let n = ((norm(sub(b, a)) / h).ceil() as usize).max(1);
    (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
        })
        .collect()
}

/// Closed polyline through `corners` with every side subdivided at size `h`
/// and the given extra breakpoints inserted.
fn boundary_polyline(corners: &[Vec2], breaks: &[Vec2], h: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    for k in 0..corners.len() {
        let a = corners[k];
        let b = corners[(k + 1) % corners.len()];
        let d = sub(b, a);
        let len2 = dot(d, d);
        let mut stops: Vec<f64> = breaks
            .iter()
            .filter(|&&p| point_on_segment(p, a, b, 1e-12 * (1.0 + len2.sqrt())))
            .map(|&p| dot(sub(p, a), d) / len2)
            .filter(|&s| s > 1e-12 && s < 1.0 - 1e-12)
            .collect();
        stops.push(0.0);
        stops.push(1.0);
        stops.sort_by(f64::total_cmp);
        stops.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        for w in stops.windows(2) {
            let p = [a[0] + w[0] * d[0], a[1] + w[0] * d[1]];
            let q = [a[0] + w[1] * d[0], a[1] + w[1] * d[1]];
            let pts = subdivide(p, q, h);
            out.extend_from_slice(&pts[..pts.len() - 1]);
        }
    }
    out
}

struct Cdt {
    cdt: ConstrainedDelaunayTriangulation<Point2<f64>>,
}

impl Cdt {
    fn insert(&mut self, p: Vec2) -> Result<spade::handles::FixedVertexHandle> {
        self.cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::Geometry(format!("triangulation insert failed: {e:?}")))
    }

    fn add_loop(&mut self, pts: &[Vec2], closed: bool) -> Result<()> {
        let handles = pts
            .iter()
            .map(|&p| self.insert(p))
            .collect::<Result<Vec<_>>>()?;
        let n = handles.len();
        let m = if closed { n } else { n - 1 };
        for k in 0..m {
            let (a, b) = (handles[k], handles[(k + 1) % n]);
            if a != b && !self.cdt.can_add_constraint(a, b) {
                return Err(Error::Geometry("boundary features intersect".into()));
            }
            self.cdt.add_constraint(a, b);
        }
        Ok(())
    }
}

/// Conforming mesh of `(domain ∪ extension) \ (notch ∪ holes)` with element
/// size about `target_h`: constrained Delaunay refinement followed by
/// Laplacian smoothing. A thin notch becomes a slit with duplicated vertices.
pub fn build_scenario_mesh(geom: &ScenarioGeometry, target_h: f64) -> Result<Triangulation> {
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target_h must be positive (got {target_h})"
        )));
    }
    geom.validate()?;
    let outer = geom.outer()?;
    let h = target_h;
    let slit = geom.uses_slit(h);

    let mut cdt = Cdt {
        cdt: ConstrainedDelaunayTriangulation::new(),
    };
    let corners = [
        [outer.x0, outer.y0],
        [outer.x1, outer.y0],
        [outer.x1, outer.y1],
        [outer.x0, outer.y1],
    ];
    let mut breaks: Vec<Vec2> = geom.bc.iter().flat_map(|s| [s.a, s.b]).collect();
    if let Some(n) = geom.notch {
        if slit {
            breaks.extend(n.slit());
        } else {
            let r = n.rect;
            breaks.extend([[r.x0, r.y0], [r.x1, r.y0], [r.x1, r.y1], [r.x0, r.y1]]);
        }
    }
    cdt.add_loop(&boundary_polyline(&corners, &breaks, h), true)?;
    for hole in &geom.holes {
        cdt.add_loop(&hole.polygon(h), true)?;
    }
    if let Some(n) = geom.notch {
        if slit {
            let [a, b] = n.slit();
            cdt.add_loop(&subdivide(a, b, h), false)?;
        } else {
            let r = n.rect;
            let c = [[r.x0, r.y0], [r.x1, r.y0], [r.x1, r.y1], [r.x0, r.y1]];
            let poly = boundary_polyline(&c, &[], h);
            // Sides lying on the outer boundary are already constrained.
            for k in 0..poly.len() {
                let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
                if side_of(outer, p).is_some()
                    && side_of(outer, q).is_some()
                    && same_side(outer, p, q)
                {
                    continue;
                }
                cdt.add_loop(&[p, q], false)?;
            }
        }
    }

    let ideal_area = 3f64.sqrt() / 4.0 * h * h;
    let estimate = (outer.area() / ideal_area).ceil() as usize;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_allowed_area(ideal_area)
        .with_min_required_area(ideal_area * 1e-4)
        .with_max_additional_vertices(20 * estimate + 10_000);
    cdt.cdt.refine(params);

    let all_vertices: Vec<Vec2> = cdt
        .cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let hole_polys: Vec<Vec<Vec2>> = geom.holes.iter().map(|c| c.polygon(h)).collect();
    let inside_convex = |poly: &[Vec2], p: Vec2| {
        (0..poly.len())
            .all(|k| cross(sub(poly[(k + 1) % poly.len()], poly[k]), sub(p, poly[k])) > 0.0)
    };
    let mut triangles = Vec::new();
    for f in cdt.cdt.inner_faces() {
        let idx = f.vertices().map(|v| v.fix().index());
        let c = {
            let [a, b, d] = idx.map(|i| all_vertices[i]);
            [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0]
        };
        if hole_polys.iter().any(|poly| inside_convex(poly, c)) {
            continue;
        }
        if let (Some(n), false) = (geom.notch, slit) {
            if n.rect.contains(c) {
                continue;
            }
        }
        triangles.push(idx);
    }

    // Compact vertex numbering.
    let mut map = vec![usize::MAX; all_vertices.len()];
    let mut vertices = Vec::new();
    for tri in triangles.iter_mut() {
        for i in tri.iter_mut() {
            if map[*i] == usize::MAX {
                map[*i] = vertices.len();
                vertices.push(all_vertices[*i]);
            }
            *i = map[*i];
        }
    }
    let mut mesh = Triangulation::new(vertices, triangles, Vec::new())?;
    if slit {
        let [a, b] = geom.notch.expect("slit implies notch").slit();
        mesh = open_slit(&mesh, a, b)?;
    }
    let mesh = label_boundary(&mesh, geom, outer)?;
    let mesh = laplacian_smooth(&mesh, 4)?;
    let expected = geom.expected_euler(h);
    if mesh.euler_characteristic() != expected {
        return Err(Error::Geometry(format!(
            "generated mesh has Euler characteristic {} (expected {expected})",
            mesh.euler_characteristic()
        )));
    }
    Ok(mesh)
}

/// Duplicates vertices along the segment `a → b` so that the two sides of
/// every interior edge on the segment become disconnected boundary edges.
pub(crate) fn open_slit(mesh: &Triangulation, a: Vec2, b: Vec2) -> Result<Triangulation> {
    let tol = 1e-10 * norm(sub(b, a)).max(1e-300);
    let on = |v: usize| point_on_segment(mesh.vertex(v), a, b, tol);
    let is_slit = |e: usize| {
        let edge = &mesh.edges()[e];
        !edge.is_boundary() && on(edge.v[0]) && on(edge.v[1])
    };
    let mut vertices = mesh.vertices().to_vec();
    let mut triangles = mesh.triangles().to_vec();
    for p in 0..mesh.n_vertices() {
        if !on(p) {
            continue;
        }
        let tris = mesh.vertex_triangles(p);
        // Union-find over incident triangles connected through non-slit edges.
        let mut parent: Vec<usize> = (0..tris.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (ia, &ta) in tris.iter().enumerate() {
            for &e in &mesh.triangle_edges(ta) {
                let edge = &mesh.edges()[e];
                if !edge.v.contains(&p) || edge.is_boundary() || is_slit(e) {
                    continue;
                }
                let other = if edge.tris[0] == ta {
                    edge.tris[1]
                } else {
                    edge.tris[0]
                };
                if let Some(ib) = tris.iter().position(|&t| t == other) {
                    let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let roots: Vec<usize> = (0..tris.len()).map(|i| find(&mut parent, i)).collect();
        let mut assigned: Vec<(usize, usize)> = vec![(roots[0], p)];
        for (i, &r) in roots.iter().enumerate() {
            let idx = match assigned.iter().find(|x| x.0 == r) {
                Some(&(_, v)) => v,
                None => {
                    vertices.push(mesh.vertex(p));
                    assigned.push((r, vertices.len() - 1));
                    vertices.len() - 1
                }
            };
            if idx != p {
                for v in triangles[tris[i]].iter_mut() {
                    if *v == p {
                        *v = idx;
                    }
                }
            }
        }
    }
    Triangulation::new(vertices, triangles, Vec::new())
}

fn label_boundary(
    mesh: &Triangulation,
    geom: &ScenarioGeometry,
    outer: Rect,
) -> Result<Triangulation> {
    let scale = 1.0 + outer.width().max(outer.height());
    let tol = 1e-10 * scale;
    let mut labels = Vec::with_capacity(mesh.boundary_edges().len());
    for be in mesh.boundary_edges() {
        let (p, q) = (mesh.vertex(be.v[0]), mesh.vertex(be.v[1]));
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let label =
            if side_of(outer, p).is_some() && side_of(outer, q).is_some() && same_side(outer, p, q)
            {
                geom.bc
                    .iter()
                    .find(|s| point_on_segment(mid, s.a, s.b, tol))
                    .map_or(BoundaryLabel::Free, |s| s.label)
            } else if geom
                .holes
                .iter()
                .any(|c| norm(sub(mid, c.center)) <= c.radius * (1.0 + 1e-9))
            {
                BoundaryLabel::Hole
            } else if geom.notch.is_some_and(|n| {
                let r = n.rect;
                mid[0] >= r.x0 - tol
                    && mid[0] <= r.x1 + tol
                    && mid[1] >= r.y0 - tol
                    && mid[1] <= r.y1 + tol
            }) {
                BoundaryLabel::Notch
            } else {
                return Err(Error::Geometry(format!(
                    "boundary edge at ({}, {}) belongs to no feature",
                    mid[0], mid[1]
                )));
            };
        labels.push(BoundaryEdge { v: be.v, label });
    }
    labels.sort_by_key(|b| (b.v[0], b.v[1]));
    Triangulation::new(mesh.vertices().to_vec(), mesh.triangles().to_vec(), labels)
}

/// Mean-ratio quality `4√3 |T| / Σ l²`, 1 for equilateral triangles.
pub(crate) fn triangle_quality(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let area = 0.5 * cross(sub(b, a), sub(c, a));
    let l2 = dot(sub(b, a), sub(b, a)) + dot(sub(c, b), sub(c, b)) + dot(sub(a, c), sub(a, c));
    4.0 * 3f64.sqrt() * area / l2
}

/// Moves interior vertices toward the average of their neighbours whenever that
/// does not lower the worst quality of the incident triangles.
pub(crate) fn laplacian_smooth(mesh: &Triangulation, sweeps: usize) -> Result<Triangulation> {
    let mut on_boundary = vec![false; mesh.n_vertices()];
    for be in mesh.boundary_edges() {
        on_boundary[be.v[0]] = true;
        on_boundary[be.v[1]] = true;
    }
    let mut pos = mesh.vertices().to_vec();
    let worst = |pos: &[Vec2], v: usize| {
        mesh.vertex_triangles(v)
            .iter()
            .map(|&t| {
                let [a, b, c] = mesh.triangle(t);
                triangle_quality(pos[a], pos[b], pos[c])
            })
            .fold(f64::INFINITY, f64::min)
    };
    for _ in 0..sweeps {
        for v in 0..mesh.n_vertices() {
            if on_boundary[v] {
                continue;
            }
            let nb = mesh.vertex_neighbors(v);
            let mut avg = [0.0; 2];
            for &w in &nb {
                avg[0] += pos[w][0];
                avg[1] += pos[w][1];
            }
            avg = [avg[0] / nb.len() as f64, avg[1] / nb.len() as f64];
            let before = worst(&pos, v);
            let old = pos[v];
            pos[v] = avg;
            if worst(&pos, v) < before {
                pos[v] = old;
            }
        }
    }
    Triangulation::new(
        pos,
        mesh.triangles().to_vec(),
        mesh.boundary_edges().to_vec(),
    )
}
