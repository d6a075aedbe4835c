//! ASCII mesh format.
//!
//! ```text
//! shellmesh 1
//! V <n>
//! <x> <y>            (n lines)
//! T <m>
//! <i> <j> <k>        (m lines, counterclockwise, 0-based)
//! B <p>
//! <i> <j> <label>    (p lines; label in plus|minus|zero|free|notch|hole)
//! ```
//!
//! Coordinates are written in shortest round-trip decimal form, so
//! `write(read(s)) == s` for every file produced by [`write_mesh`].

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryLabel, Triangulation};
use crate::error::{Error, Result};

pub const MAGIC: &str = "shellmesh 1";

pub fn mesh_to_string(mesh: &Triangulation) -> String {
    let mut s = String::with_capacity(40 * (mesh.n_vertices() + mesh.n_triangles()));
    s.push_str(MAGIC);
    s.push('\n');
    let _ = writeln!(s, "V {}", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(s, "T {}", mesh.n_triangles());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "B {}", mesh.boundary_edges().len());
    for b in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", b.v[0], b.v[1], b.label);
    }
    s
}

pub fn mesh_from_str(text: &str) -> Result<Triangulation> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| Error::parse(0, format!("unexpected end of file, expected {what}")))
    };
    let (ln, magic) = next("header")?;
    if magic != MAGIC {
        return Err(Error::parse(ln, format!("expected `{MAGIC}`")));
    }
    let count = |ln: usize, line: &str, tag: &str| -> Result<usize> {
        let mut it = line.split_whitespace();
        if it.next() != Some(tag) {
            return Err(Error::parse(ln, format!("expected `{tag} <count>`")));
        }
        let n = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(ln, "invalid count"))?;
        if it.next().is_some() {
            return Err(Error::parse(ln, "trailing tokens"));
        }
        Ok(n)
    };
    fn fields<'a, const N: usize>(ln: usize, line: &'a str) -> Result<[&'a str; N]> {
        let v: Vec<&str> = line.split_whitespace().collect();
        v.try_into()
            .map_err(|_| Error::parse(ln, format!("expected {N} fields")))
    }
    let num = |ln: usize, s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::parse(ln, format!("invalid number `{s}`")))
    };
    let idx = |ln: usize, s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::parse(ln, format!("invalid index `{s}`")))
    };

    let (ln, l) = next("vertex count")?;
    let nv = count(ln, l, "V")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex")?;
        let [x, y] = fields::<2>(ln, l)?;
        vertices.push([num(ln, x)?, num(ln, y)?]);
    }
    let (ln, l) = next("triangle count")?;
    let nt = count(ln, l, "T")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = next("triangle")?;
        let [a, b, c] = fields::<3>(ln, l)?;
        triangles.push([idx(ln, a)?, idx(ln, b)?, idx(ln, c)?]);
    }
    let (ln, l) = next("boundary count")?;
    let nb = count(ln, l, "B")?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = next("boundary edge")?;
        let [a, b, lab] = fields::<3>(ln, l)?;
        let label: BoundaryLabel = lab.parse().map_err(|e: String| Error::parse(ln, e))?;
        boundary.push(BoundaryEdge {
            v: [idx(ln, a)?, idx(ln, b)?],
            label,
        });
    }
    for (ln, l) in lines {
        if !l.is_empty() {
            return Err(Error::parse(ln, "trailing content"));
        }
    }
    Triangulation::new(vertices, triangles, boundary)
}

pub fn write_mesh(mesh: &Triangulation, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Triangulation> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}
