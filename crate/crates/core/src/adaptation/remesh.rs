//! Metric-conforming remeshing by local operations: edge splits, edge
//! collapses, edge flips and vertex smoothing, all measured in the metric.
//!
//! The prescribed element metric has semi-axes `σ*ᵢ` on the reference triangle
//! inscribed in the unit circle, whose edges have length `√3`; edges are
//! therefore measured in `𝓜/3` and targeted at unit length.
//!
//! Boundary vertices where the label changes or the boundary turns stay fixed;
//! other boundary vertices slide along their straight segment or along their
//! hole circle. Slit sides are separate boundary curves and never merge.

use std::collections::{HashMap, HashSet};
use std::f64::consts::SQRT_2;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetricField;
use crate::error::{Error, Result};
use crate::linalg::{cross, dot, norm, sub, Sym2, Vec2};
use crate::mesh::{signed_area, BoundaryEdge, BoundaryLabel, Circle, Locator, Triangulation};

/// Geometric features the remesher must respect beyond the boundary polyline.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Features {
    /// Hole circles; boundary vertices on them are reprojected after moves.
    pub holes: Vec<Circle>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemeshOptions {
    pub max_passes: usize,
    /// Seed of the vertex order used by smoothing.
    pub seed: u64,
    /// Smoothing sweeps of the first pass; later passes use one.
    pub smoothing_sweeps: usize,
    /// A pass with at most this fraction of splits and collapses per
    /// triangle counts as converged.
    pub settle_fraction: f64,
    /// Splitting stops once the mesh reaches this size.
    pub max_triangles: usize,
    /// Hole loops are never coarsened below this many vertices.
    pub min_hole_vertices: usize,
}

impl Default for RemeshOptions {
    fn default() -> Self {
        RemeshOptions {
            max_passes: 10,
            seed: 0,
            smoothing_sweeps: 3,
            settle_fraction: 1e-3,
            max_triangles: 2_000_000,
            min_hole_vertices: 8,
        }
    }
}

/// Summary of a remeshing run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RemeshReport {
    pub passes: usize,
    /// The last pass split or collapsed at most `settle_fraction` of the triangles.
    pub converged: bool,
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub moves: usize,
    /// Fraction of edges with metric length in `[1/√2, √2]`.
    pub fraction_in_range: f64,
    pub mean_length: f64,
    /// Smallest metric mean-ratio quality.
    pub min_quality: f64,
}

const NONE: usize = usize::MAX;
const MAX_ROUNDS: usize = 40;
const COLLAPSE_QUALITY: f64 = 0.2;
const FLIP_GAIN: f64 = 1e-6;
const COLLINEAR_TOL: f64 = 1e-9;
const CIRCLE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Interior,
    Fixed,
    Line(Vec2),
    Circle(usize),
}

struct Background<'a> {
    locator: Locator<'a>,
    mesh: &'a Triangulation,
    logs: Vec<Sym2>,
}

impl Background<'_> {
    fn log_at(&self, p: Vec2) -> Option<Sym2> {
        let (t, l) = self.locator.locate_snapped(p, 1e-9)?;
        let tri = self.mesh.triangle(t);
        Some(self.logs[tri[0]] * l[0] + self.logs[tri[1]] * l[1] + self.logs[tri[2]] * l[2])
    }
}

#[derive(Clone, Copy)]
struct EdgeInfo {
    v: [usize; 2],
    tris: [usize; 2],
}

struct Work<'a> {
    pts: Vec<Vec2>,
    logs: Vec<Sym2>,
    tris: Vec<[usize; 3]>,
    /// Directed boundary edges (domain on the left).
    bnd: HashMap<(usize, usize), BoundaryLabel>,
    bg: Background<'a>,
    holes: &'a [Circle],
    opts: RemeshOptions,
}

struct Classification {
    kinds: Vec<Kind>,
    prev: Vec<usize>,
    next: Vec<usize>,
}

fn gauss_length(la: &Sym2, lb: &Sym2, e: Vec2) -> f64 {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
        .iter()
        .map(|&s| ((*la * (1.0 - s) + *lb * s).exp().quad(e)).sqrt())
        .sum::<f64>()
        * 0.5
}

impl Work<'_> {
    fn length(&self, a: usize, b: usize) -> f64 {
        gauss_length(&self.logs[a], &self.logs[b], sub(self.pts[b], self.pts[a]))
    }

    fn quality_at(&self, v: [usize; 3], moved: Option<(usize, Vec2, Sym2)>) -> f64 {
        let get = |i: usize| match moved {
            Some((m, p, l)) if m == i => (p, l),
            _ => (self.pts[i], self.logs[i]),
        };
        let (pa, la) = get(v[0]);
        let (pb, lb) = get(v[1]);
        let (pc, lc) = get(v[2]);
        let area = signed_area(pa, pb, pc);
        if !(area > 0.0) {
            return -1.0;
        }
        let m = ((la + lb + lc) * (1.0 / 3.0)).exp();
        let s = m.quad(sub(pb, pa)) + m.quad(sub(pc, pb)) + m.quad(sub(pa, pc));
        4.0 * 3f64.sqrt() * area * m.det().max(0.0).sqrt() / s
    }

    fn quality(&self, v: [usize; 3]) -> f64 {
        self.quality_at(v, None)
    }

    fn log_at(&self, p: Vec2, fallback: Sym2) -> Sym2 {
        self.bg.log_at(p).unwrap_or(fallback)
    }

    fn circle_of(&self, p: Vec2) -> Option<usize> {
        self.holes.iter().position(|c| {
            (norm(sub(p, c.center)) - c.radius).abs() <= CIRCLE_TOL * c.radius.max(1.0)
        })
    }

    fn project_circle(&self, i: usize, p: Vec2) -> Vec2 {
        let c = &self.holes[i];
        let d = sub(p, c.center);
        let r = norm(d);
        if r == 0.0 {
            return p;
        }
        [
            c.center[0] + c.radius * d[0] / r,
            c.center[1] + c.radius * d[1] / r,
        ]
    }

    fn edge_list(&self) -> Vec<EdgeInfo> {
        let mut all: Vec<([usize; 2], usize)> = Vec::with_capacity(3 * self.tris.len());
        for (t, tri) in self.tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                all.push((if a < b { [a, b] } else { [b, a] }, t));
            }
        }
        all.sort_unstable();
        let mut out: Vec<EdgeInfo> = Vec::with_capacity(all.len() / 2 + 1);
        for (v, t) in all {
            match out.last_mut() {
                Some(e) if e.v == v => e.tris[1] = t,
                _ => out.push(EdgeInfo { v, tris: [t, NONE] }),
            }
        }
        out
    }

    fn vertex_tris(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.pts.len()];
        for (t, tri) in self.tris.iter().enumerate() {
            for &v in tri {
                vt[v].push(t);
            }
        }
        vt
    }

    fn classify(&self) -> Classification {
        let n = self.pts.len();
        let mut prev = vec![NONE; n];
        let mut next = vec![NONE; n];
        let mut label_in = vec![None; n];
        let mut label_out = vec![None; n];
        let mut pinched = vec![false; n];
        for (&(a, b), &l) in &self.bnd {
            if next[a] != NONE {
                pinched[a] = true;
            }
            if prev[b] != NONE {
                pinched[b] = true;
            }
            next[a] = b;
            prev[b] = a;
            label_out[a] = Some(l);
            label_in[b] = Some(l);
        }
        let kinds = (0..n)
            .map(|v| {
                if prev[v] == NONE && next[v] == NONE {
                    return Kind::Interior;
                }
                if pinched[v] || prev[v] == NONE || next[v] == NONE || label_in[v] != label_out[v] {
                    return Kind::Fixed;
                }
                if label_in[v] == Some(BoundaryLabel::Hole) {
                    if let Some(i) = self.circle_of(self.pts[v]) {
                        let (u, w) = (prev[v], next[v]);
                        if self.circle_of(self.pts[u]) == Some(i)
                            && self.circle_of(self.pts[w]) == Some(i)
                        {
                            return Kind::Circle(i);
                        }
                    }
                }
                let d1 = sub(self.pts[v], self.pts[prev[v]]);
                let d2 = sub(self.pts[next[v]], self.pts[v]);
                let (n1, n2) = (norm(d1), norm(d2));
                let c = cross(d1, d2) / (n1 * n2);
                if c.abs() <= COLLINEAR_TOL && dot(d1, d2) > 0.0 {
                    Kind::Line([d1[0] / n1, d1[1] / n1])
                } else {
                    Kind::Fixed
                }
            })
            .collect();
        Classification { kinds, prev, next }
    }

    fn boundary_label(&self, a: usize, b: usize) -> Option<((usize, usize), BoundaryLabel)> {
        if let Some(&l) = self.bnd.get(&(a, b)) {
            return Some(((a, b), l));
        }
        self.bnd.get(&(b, a)).map(|&l| ((b, a), l))
    }

    /// Rotates `tri` so that its first two vertices are `{a, b}`; returns the
    /// ordered pair and the opposite vertex.
    fn opposite(tri: [usize; 3], a: usize, b: usize) -> (usize, usize, usize) {
        for k in 0..3 {
            let (x, y) = (tri[k], tri[(k + 1) % 3]);
            if (x == a && y == b) || (x == b && y == a) {
                return (x, y, tri[(k + 2) % 3]);
            }
        }
        unreachable!("edge not in triangle")
    }

    fn split_round(&mut self) -> usize {
        let cls = self.classify();
        let edges = self.edge_list();
        let lens: Vec<f64> =
            crate::par::map_range(edges.len(), |e| self.length(edges[e].v[0], edges[e].v[1]));
        let mut cand: Vec<usize> = (0..edges.len()).filter(|&e| lens[e] > SQRT_2).collect();
        cand.sort_by(|&x, &y| lens[y].total_cmp(&lens[x]).then(x.cmp(&y)));
        let mut touched = vec![false; self.tris.len()];
        let mut count = 0;
        for e in cand {
            if self.tris.len() >= self.opts.max_triangles {
                break;
            }
            let ed = edges[e];
            let ts: Vec<usize> = ed.tris.iter().copied().filter(|&t| t != NONE).collect();
            if ts.iter().any(|&t| touched[t]) {
                continue;
            }
            let [a, b] = ed.v;
            let (pa, pb) = (self.pts[a], self.pts[b]);
            let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let bl = self.boundary_label(a, b);
            if let Some((_, BoundaryLabel::Hole)) = bl {
                let circle = match (cls.kinds[a], cls.kinds[b]) {
                    (Kind::Circle(i), _) | (_, Kind::Circle(i)) => Some(i),
                    _ => None,
                };
                if let Some(i) = circle {
                    m = self.project_circle(i, m);
                }
            }
            let mi = self.pts.len();
            let mut new_tris = Vec::with_capacity(4);
            for &t in &ts {
                let (x, y, c) = Self::opposite(self.tris[t], a, b);
                new_tris.push((t, [x, mi, c], [mi, y, c]));
            }
            let pos = |i: usize| if i == mi { m } else { self.pts[i] };
            let ok = new_tris.iter().all(|(_, t1, t2)| {
                signed_area(pos(t1[0]), pos(t1[1]), pos(t1[2])) > 0.0
                    && signed_area(pos(t2[0]), pos(t2[1]), pos(t2[2])) > 0.0
            });
            if !ok {
                continue;
            }
            let fallback = (self.logs[a] + self.logs[b]) * 0.5;
            let lm = self.log_at(m, fallback);
            self.pts.push(m);
            self.logs.push(lm);
            for (t, t1, t2) in new_tris {
                touched[t] = true;
                self.tris[t] = t1;
                self.tris.push(t2);
            }
            if let Some(((x, y), l)) = bl {
                self.bnd.remove(&(x, y));
                self.bnd.insert((x, mi), l);
                self.bnd.insert((mi, y), l);
            }
            count += 1;
        }
        count
    }

    fn collapse_round(&mut self) -> usize {
        let cls = self.classify();
        let edges = self.edge_list();
        let vt = self.vertex_tris();
        let lens: Vec<f64> =
            crate::par::map_range(edges.len(), |e| self.length(edges[e].v[0], edges[e].v[1]));
        let mut cand: Vec<usize> = (0..edges.len())
            .filter(|&e| lens[e] < 1.0 / SQRT_2)
            .collect();
        cand.sort_by(|&x, &y| lens[x].total_cmp(&lens[y]).then(x.cmp(&y)));
        let mut circle_count = vec![0usize; self.holes.len()];
        for k in &cls.kinds {
            if let Kind::Circle(i) = k {
                circle_count[*i] += 1;
            }
        }
        let mut locked = vec![false; self.tris.len()];
        let mut dead = vec![false; self.tris.len()];
        let mut count = 0;
        for e in cand {
            let ed = edges[e];
            let [a, b] = ed.v;
            if vt[a].iter().chain(&vt[b]).any(|&t| locked[t]) {
                continue;
            }
            for (x, y) in [(a, b), (b, a)] {
                if let Some(updates) = self.try_collapse(x, y, &ed, &cls, &vt, &circle_count) {
                    for (t, tri) in updates {
                        match tri {
                            Some(tri) => self.tris[t] = tri,
                            None => dead[t] = true,
                        }
                    }
                    if ed.tris[1] == NONE {
                        let (u, w) = (cls.prev[x], cls.next[x]);
                        if w == y {
                            self.bnd.remove(&(x, y));
                            let l = self.bnd.remove(&(u, x)).expect("boundary edge");
                            self.bnd.insert((u, y), l);
                        } else {
                            self.bnd.remove(&(y, x));
                            let l = self.bnd.remove(&(x, w)).expect("boundary edge");
                            self.bnd.insert((y, w), l);
                        }
                    }
                    if let Kind::Circle(i) = cls.kinds[x] {
                        circle_count[i] -= 1;
                    }
                    for &t in vt[a].iter().chain(&vt[b]) {
                        locked[t] = true;
                    }
                    count += 1;
                    break;
                }
            }
        }
        if count > 0 {
            let mut k = 0;
            self.tris.retain(|_| {
                k += 1;
                !dead[k - 1]
            });
            self.compact();
        }
        count
    }

    /// Triangle updates for collapsing `x` onto `y`, or `None` if invalid.
    fn try_collapse(
        &self,
        x: usize,
        y: usize,
        ed: &EdgeInfo,
        cls: &Classification,
        vt: &[Vec<usize>],
        circle_count: &[usize],
    ) -> Option<Vec<(usize, Option<[usize; 3]>)>> {
        let boundary_edge = ed.tris[1] == NONE;
        match cls.kinds[x] {
            Kind::Fixed => return None,
            Kind::Interior => {}
            Kind::Line(_) => {
                if !boundary_edge {
                    return None;
                }
            }
            Kind::Circle(i) => {
                if !boundary_edge || circle_count[i] <= self.opts.min_hole_vertices {
                    return None;
                }
            }
        }
        // Link condition.
        let nbrs = |v: usize| -> HashSet<usize> {
            vt[v]
                .iter()
                .flat_map(|&t| self.tris[t])
                .filter(|&w| w != v)
                .collect()
        };
        let (nx, ny) = (nbrs(x), nbrs(y));
        let common = nx.intersection(&ny).count();
        let opposite = ed.tris.iter().filter(|&&t| t != NONE).count();
        if common != opposite {
            return None;
        }
        let mut old_min = f64::INFINITY;
        for &t in &vt[x] {
            old_min = old_min.min(self.quality(self.tris[t]));
        }
        let mut new_min = f64::INFINITY;
        let mut updates = Vec::with_capacity(vt[x].len());
        for &t in &vt[x] {
            let tri = self.tris[t];
            if tri.contains(&y) {
                updates.push((t, None));
                continue;
            }
            let nt = tri.map(|v| if v == x { y } else { v });
            new_min = new_min.min(self.quality(nt));
            updates.push((t, Some(nt)));
        }
        if !(new_min > 0.0) || new_min < old_min.min(COLLAPSE_QUALITY) {
            return None;
        }
        let mut sorted: Vec<usize> = nx.into_iter().filter(|&z| z != y).collect();
        sorted.sort_unstable();
        if sorted.iter().any(|&z| self.length(y, z) > SQRT_2) {
            return None;
        }
        Some(updates)
    }

    /// Drops unreferenced vertices and renumbers.
    fn compact(&mut self) {
        let mut map = vec![NONE; self.pts.len()];
        let mut used = vec![false; self.pts.len()];
        for tri in &self.tris {
            for &v in tri {
                used[v] = true;
            }
        }
        let mut pts = Vec::new();
        let mut logs = Vec::new();
        for v in 0..self.pts.len() {
            if used[v] {
                map[v] = pts.len();
                pts.push(self.pts[v]);
                logs.push(self.logs[v]);
            }
        }
        for tri in &mut self.tris {
            *tri = tri.map(|v| map[v]);
        }
        self.bnd = self
            .bnd
            .iter()
            .map(|(&(a, b), &l)| ((map[a], map[b]), l))
            .collect();
        self.pts = pts;
        self.logs = logs;
    }

    fn flip_round(&mut self) -> usize {
        let edges = self.edge_list();
        let mut existing: HashSet<[usize; 2]> = edges.iter().map(|e| e.v).collect();
        let mut touched = vec![false; self.tris.len()];
        let mut count = 0;
        for ed in &edges {
            let [t1, t2] = ed.tris;
            if t2 == NONE || touched[t1] || touched[t2] {
                continue;
            }
            let [a, b] = ed.v;
            let (x, y, c) = Self::opposite(self.tris[t1], a, b);
            let (_, _, d) = Self::opposite(self.tris[t2], a, b);
            let key = if c < d { [c, d] } else { [d, c] };
            if existing.contains(&key) {
                continue;
            }
            // t1 = (x, y, c) counterclockwise, d lies to the right of x → y.
            let n1 = [x, d, c];
            let n2 = [d, y, c];
            let old = self.quality(self.tris[t1]).min(self.quality(self.tris[t2]));
            let new = self.quality(n1).min(self.quality(n2));
            if new > old + FLIP_GAIN {
                self.tris[t1] = n1;
                self.tris[t2] = n2;
                touched[t1] = true;
                touched[t2] = true;
                existing.insert(key);
                count += 1;
            }
        }
        count
    }

    fn smooth(&mut self, rng: &mut ChaCha8Rng) -> usize {
        let cls = self.classify();
        let vt = self.vertex_tris();
        let mut order: Vec<usize> = (0..self.pts.len()).collect();
        order.shuffle(rng);
        let mut moves = 0;
        for v in order {
            let kind = cls.kinds[v];
            let target = match kind {
                Kind::Fixed => continue,
                Kind::Interior => {
                    let mut nb: Vec<usize> = vt[v]
                        .iter()
                        .flat_map(|&t| self.tris[t])
                        .filter(|&w| w != v)
                        .collect();
                    nb.sort_unstable();
                    nb.dedup();
                    let k = nb.len() as f64;
                    let s = nb.iter().fold([0.0, 0.0], |s, &w| {
                        [s[0] + self.pts[w][0], s[1] + self.pts[w][1]]
                    });
                    [s[0] / k, s[1] / k]
                }
                Kind::Line(_) | Kind::Circle(_) => {
                    let (u, w) = (self.pts[cls.prev[v]], self.pts[cls.next[v]]);
                    [0.5 * (u[0] + w[0]), 0.5 * (u[1] + w[1])]
                }
            };
            let p = self.pts[v];
            let old = vt[v]
                .iter()
                .map(|&t| self.quality(self.tris[t]))
                .fold(f64::INFINITY, f64::min);
            for step in [1.0, 0.5, 0.25] {
                let mut q = [
                    p[0] + step * (target[0] - p[0]),
                    p[1] + step * (target[1] - p[1]),
                ];
                match kind {
                    Kind::Line(d) => {
                        if d[1].abs() <= 1e-12 {
                            q[1] = p[1];
                        } else if d[0].abs() <= 1e-12 {
                            q[0] = p[0];
                        } else {
                            let s = dot(sub(q, p), d);
                            q = [p[0] + s * d[0], p[1] + s * d[1]];
                        }
                    }
                    Kind::Circle(i) => q = self.project_circle(i, q),
                    _ => {}
                }
                let lq = self.log_at(q, self.logs[v]);
                let new = vt[v]
                    .iter()
                    .map(|&t| self.quality_at(self.tris[t], Some((v, q, lq))))
                    .fold(f64::INFINITY, f64::min);
                if new > old + 1e-9 {
                    self.pts[v] = q;
                    self.logs[v] = lq;
                    moves += 1;
                    break;
                }
            }
        }
        moves
    }

    fn report(&self) -> (f64, f64, f64) {
        let edges = self.edge_list();
        let lens: Vec<f64> =
            crate::par::map_range(edges.len(), |e| self.length(edges[e].v[0], edges[e].v[1]));
        let inside = lens
            .iter()
            .filter(|&&l| (1.0 / SQRT_2..=SQRT_2).contains(&l))
            .count();
        let mean = lens.iter().sum::<f64>() / lens.len().max(1) as f64;
        let qmin = self
            .tris
            .iter()
            .map(|&t| self.quality(t))
            .fold(f64::INFINITY, f64::min);
        (inside as f64 / lens.len().max(1) as f64, mean, qmin)
    }
}

/// Builds a mesh conforming to `metric` (given per element of `old`) by
/// iterated local modification of `old`.
pub fn remesh(
    metric: &MetricField,
    old: &Triangulation,
    features: &Features,
    opts: &RemeshOptions,
) -> Result<(Triangulation, RemeshReport)> {
    let shift = Sym2::identity() * 3f64.ln();
    let logs: Vec<Sym2> = metric
        .vertex_logs(old)?
        .into_iter()
        .map(|l| l - shift)
        .collect();
    if logs
        .iter()
        .any(|l| !(l.xx.is_finite() && l.xy.is_finite() && l.yy.is_finite()))
    {
        return Err(Error::InvalidParameter(
            "metric is not symmetric positive definite".into(),
        ));
    }
    let mut work = Work {
        pts: old.vertices().to_vec(),
        logs: logs.clone(),
        tris: old.triangles().to_vec(),
        bnd: old
            .boundary_edges()
            .iter()
            .map(|e| ((e.v[0], e.v[1]), e.label))
            .collect(),
        bg: Background {
            locator: Locator::new(old),
            mesh: old,
            logs,
        },
        holes: &features.holes,
        opts: *opts,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rep = RemeshReport::default();
    for pass in 0..opts.max_passes {
        rep.passes = pass + 1;
        let mut changed = 0;
        for _ in 0..MAX_ROUNDS {
            let s = work.split_round();
            changed += s;
            rep.splits += s;
            if s == 0 {
                break;
            }
        }
        for _ in 0..MAX_ROUNDS {
            let c = work.collapse_round();
            changed += c;
            rep.collapses += c;
            if c == 0 {
                break;
            }
        }
        let sweeps = if pass == 0 {
            opts.smoothing_sweeps
        } else {
            opts.smoothing_sweeps.min(1)
        };
        for _ in 0..sweeps {
            for _ in 0..MAX_ROUNDS {
                let f = work.flip_round();
                rep.flips += f;
                if f == 0 {
                    break;
                }
            }
            rep.moves += work.smooth(&mut rng);
        }
        for _ in 0..MAX_ROUNDS {
            let f = work.flip_round();
            rep.flips += f;
            if f == 0 {
                break;
            }
        }
        if changed as f64 <= opts.settle_fraction * work.tris.len() as f64 {
            rep.converged = true;
            break;
        }
    }
    let (fraction, mean, qmin) = work.report();
    rep.fraction_in_range = fraction;
    rep.mean_length = mean;
    rep.min_quality = qmin;
    let mut labels: Vec<BoundaryEdge> = work
        .bnd
        .iter()
        .map(|(&(a, b), &label)| BoundaryEdge { v: [a, b], label })
        .collect();
    labels.sort_by_key(|e| e.v);
    let mesh = Triangulation::new(work.pts, work.tris, labels)?;
    Ok((mesh, rep))
}
