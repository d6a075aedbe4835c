//! Planar triangulations of the chart domain.

mod element_map;
pub mod io;
mod locate;
pub mod scenario;
mod stiffness;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use element_map::{ElementMap, REFERENCE_AREA};
pub use locate::Locator;
pub use scenario::{build_scenario_mesh, BcSegment, Circle, NotchSpec, ScenarioGeometry};
pub use stiffness::{check_stiffness_sign, StiffnessReport};

use crate::error::{Error, Result};
use crate::linalg::{cross, norm, sub, Vec2};

/// Tag carried by every boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryLabel {
    DirichletPlus,
    DirichletMinus,
    DirichletZero,
    Free,
    Notch,
    Hole,
}

impl BoundaryLabel {
    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            BoundaryLabel::DirichletPlus
                | BoundaryLabel::DirichletMinus
                | BoundaryLabel::DirichletZero
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryLabel::DirichletPlus => "plus",
            BoundaryLabel::DirichletMinus => "minus",
            BoundaryLabel::DirichletZero => "zero",
            BoundaryLabel::Free => "free",
            BoundaryLabel::Notch => "notch",
            BoundaryLabel::Hole => "hole",
        }
    }
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "plus" => BoundaryLabel::DirichletPlus,
            "minus" => BoundaryLabel::DirichletMinus,
            "zero" => BoundaryLabel::DirichletZero,
            "free" => BoundaryLabel::Free,
            "notch" => BoundaryLabel::Notch,
            "hole" => BoundaryLabel::Hole,
            other => return Err(format!("unknown boundary label `{other}`")),
        })
    }
}

/// Oriented boundary edge: the domain lies to the left of `v[0] → v[1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub label: BoundaryLabel,
}

/// Undirected mesh edge with its one or two incident triangles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    /// Sorted vertex pair.
    pub v: [usize; 2],
    pub tris: [usize; 2],
    /// Label when the edge lies on the boundary.
    pub label: Option<BoundaryLabel>,
}

impl Edge {
    pub const NONE: usize = usize::MAX;

    pub fn is_boundary(&self) -> bool {
        self.tris[1] == Edge::NONE
    }
}

/// Conforming triangulation with counterclockwise triangles.
#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    edges: Vec<Edge>,
    /// `tri_edges[t][k]` is the edge opposite local vertex `k`.
    tri_edges: Vec<[usize; 3]>,
    vert_tri_ptr: Vec<usize>,
    vert_tri_idx: Vec<usize>,
}

impl PartialEq for Triangulation {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary == other.boundary
    }
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Triangulation {
    /// Builds the derived topology and validates the input. Boundary edges not
    /// mentioned in `labels` are tagged [`BoundaryLabel::Free`]; `labels` is kept
    /// in the given order (it defines the on-disk order).
    pub fn new(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        labels: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::Geometry("triangulation has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::Geometry(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Geometry(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement(t));
            }
        }
        {
            let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(triangles.len());
            for (t, tri) in triangles.iter().enumerate() {
                let mut key = *tri;
                key.sort_unstable();
                if let Some(prev) = seen.insert(key, t) {
                    return Err(Error::Geometry(format!(
                        "triangles {prev} and {t} coincide"
                    )));
                }
            }
        }

        let mut edge_of: HashMap<[usize; 2], usize> = HashMap::with_capacity(3 * triangles.len());
        let mut edges: Vec<Edge> = Vec::with_capacity(3 * triangles.len() / 2 + nv);
        let mut directed: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(3 * triangles.len());
        let mut tri_edges = vec![[0usize; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                if directed.insert((a, b), t).is_some() {
                    return Err(Error::Geometry(format!(
                        "edge ({a}, {b}) is used twice with the same orientation"
                    )));
                }
                let key = sorted(a, b);
                let e = *edge_of.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        v: key,
                        tris: [t, Edge::NONE],
                        label: None,
                    });
                    edges.len() - 1
                });
                if edges[e].tris[0] != t {
                    if edges[e].tris[1] != Edge::NONE {
                        return Err(Error::Geometry(format!(
                            "edge ({a}, {b}) has more than two incident triangles"
                        )));
                    }
                    edges[e].tris[1] = t;
                }
                tri_edges[t][k] = e;
            }
        }

        for be in &labels {
            let key = sorted(be.v[0], be.v[1]);
            let Some(&e) = edge_of.get(&key) else {
                return Err(Error::Geometry(format!(
                    "labelled edge ({}, {}) is not a mesh edge",
                    be.v[0], be.v[1]
                )));
            };
            if !edges[e].is_boundary() {
                return Err(Error::Geometry(format!(
                    "labelled edge ({}, {}) is interior",
                    be.v[0], be.v[1]
                )));
            }
            edges[e].label = Some(be.label);
        }
        let mut boundary = labels;
        for e in edges
            .iter_mut()
            .filter(|e| e.is_boundary() && e.label.is_none())
        {
            e.label = Some(BoundaryLabel::Free);
            let t = e.tris[0];
            let tri = triangles[t];
            // Orient so the triangle lies on the left.
            let k = (0..3)
                .find(|&k| sorted(tri[(k + 1) % 3], tri[(k + 2) % 3]) == e.v)
                .expect("edge belongs to its triangle");
            boundary.push(BoundaryEdge {
                v: [tri[(k + 1) % 3], tri[(k + 2) % 3]],
                label: BoundaryLabel::Free,
            });
        }
        // Normalise orientation of labelled edges as well.
        for be in boundary.iter_mut() {
            if directed.contains_key(&(be.v[1], be.v[0]))
                && !directed.contains_key(&(be.v[0], be.v[1]))
            {
                be.v.swap(0, 1);
            }
        }

        let mut counts = vec![0usize; nv + 1];
        for tri in &triangles {
            for &i in tri {
                counts[i + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let vert_tri_ptr = counts.clone();
        let mut fill = counts;
        let mut vert_tri_idx = vec![0; vert_tri_ptr[nv]];
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                vert_tri_idx[fill[i]] = t;
                fill[i] += 1;
            }
        }

        Ok(Triangulation {
            vertices,
            triangles,
            boundary,
            edges,
            tri_edges,
            vert_tri_ptr,
            vert_tri_idx,
        })
    }

    /// Structured mesh of a rectangle with `nx × ny` cells, each split along
    /// the diagonal from lower-left to upper-right. All boundary edges are free.
    pub fn structured_rect(rect: crate::geometry::Rect, nx: usize, ny: usize) -> Result<Self> {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    rect.x0 + rect.width() * i as f64 / nx as f64,
                    rect.y0 + rect.height() * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Triangulation::new(vertices, triangles, Vec::new())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Vec2 {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn corners(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vert_tri_idx[self.vert_tri_ptr[v]..self.vert_tri_ptr[v + 1]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Diameter `h_T` (longest edge).
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        norm(sub(b, a)).max(norm(sub(c, b))).max(norm(sub(a, c)))
    }

    /// Gradients of the three barycentric basis functions on `t`.
    pub fn basis_gradients(&self, t: usize) -> [Vec2; 3] {
        let [p0, p1, p2] = self.corners(t);
        let twice = cross(sub(p1, p0), sub(p2, p0));
        let g = |a: Vec2, b: Vec2| [(a[1] - b[1]) / twice, (b[0] - a[0]) / twice];
        [g(p1, p2), g(p2, p0), g(p0, p1)]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].v;
        norm(sub(self.vertices[b], self.vertices[a]))
    }

    /// Unit normal of edge `e` pointing out of triangle `t`.
    pub fn outward_normal(&self, t: usize, e: usize) -> Vec2 {
        let [a, b] = self.edges[e].v;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let d = sub(pb, pa);
        let len = norm(d);
        let mut n = [d[1] / len, -d[0] / len];
        let c = self.centroid(t);
        if (c[0] - pa[0]) * n[0] + (c[1] - pa[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Elements sharing at least one vertex with `t` (including `t`), sorted.
    pub fn patch(&self, t: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.triangles[t]
            .iter()
            .flat_map(|&v| self.vertex_triangles(v).iter().copied())
            .collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn element_map(&self, t: usize) -> Result<ElementMap> {
        ElementMap::new(self.corners(t)).ok_or(Error::DegenerateElement(t))
    }

    /// Neighbouring vertices of `v` (one ring), sorted.
    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self
            .vertex_triangles(v)
            .iter()
            .flat_map(|&t| self.triangles[t])
            .filter(|&w| w != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Per-vertex label list of incident boundary edges.
    pub fn vertex_boundary_labels(&self) -> Vec<Vec<BoundaryLabel>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for be in &self.boundary {
            for &v in &be.v {
                if !out[v].contains(&be.label) {
                    out[v].push(be.label);
                }
            }
        }
        out
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.edges.len() as i64 + self.n_triangles() as i64
    }

    /// Number of closed boundary loops.
    pub fn boundary_loops(&self) -> usize {
        let mut next: HashMap<usize, usize> = HashMap::new();
        for be in &self.boundary {
            next.insert(be.v[0], be.v[1]);
        }
        let mut visited: HashMap<usize, bool> = HashMap::new();
        let mut loops = 0;
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if visited.contains_key(&s) {
                continue;
            }
            loops += 1;
            let mut v = s;
            while visited.insert(v, true).is_none() {
                match next.get(&v) {
                    Some(&w) => v = w,
                    None => break,
                }
            }
        }
        loops
    }
}

pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}
