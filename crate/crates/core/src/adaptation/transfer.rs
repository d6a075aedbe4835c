use crate::error::{Error, Result};
use crate::fem::FeField;
use crate::mesh::{BoundaryLabel, Locator, Triangulation};

/// Snap tolerance for new vertices lying marginally outside the old mesh.
const SNAP_TOL: f64 = 1e-9;
/// Relative pull of slit vertices toward an incident triangle, so that the
/// lookup lands on the correct side of the cut.
const SLIT_NUDGE: f64 = 1e-7;

/// Nodal interpolation weights of a new mesh with respect to an old one.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMap {
    old_n: usize,
    stencil: Vec<([usize; 3], [f64; 3])>,
}

impl TransferMap {
    pub fn new(old: &Triangulation, new: &Triangulation) -> Result<Self> {
        let locator = Locator::new(old);
        let mut on_slit = vec![false; new.n_vertices()];
        for be in new.boundary_edges() {
            if be.label == BoundaryLabel::Notch {
                on_slit[be.v[0]] = true;
                on_slit[be.v[1]] = true;
            }
        }
        let mut stencil = Vec::with_capacity(new.n_vertices());
        for (i, &p) in new.vertices().iter().enumerate() {
            let q = if on_slit[i] {
                let t = new.vertex_triangles(i)[0];
                let c = new.centroid(t);
                [
                    p[0] + SLIT_NUDGE * (c[0] - p[0]),
                    p[1] + SLIT_NUDGE * (c[1] - p[1]),
                ]
            } else {
                p
            };
            let (t, l) = locator.locate_snapped(q, SNAP_TOL).ok_or_else(|| {
                Error::Transfer(format!(
                    "vertex {i} at ({}, {}) lies outside the old mesh",
                    p[0], p[1]
                ))
            })?;
            stencil.push((old.triangle(t), l));
        }
        Ok(TransferMap {
            old_n: old.n_vertices(),
            stencil,
        })
    }

    /// Barycentric interpolation of `field` at the new vertices.
    pub fn apply(&self, field: &FeField) -> Result<FeField> {
        if field.len() != self.old_n {
            return Err(Error::MeshMismatch(format!(
                "field has {} values, old mesh has {} vertices",
                field.len(),
                self.old_n
            )));
        }
        let f = &field.values;
        Ok(FeField::new(
            self.stencil
                .iter()
                .map(|(v, l)| l[0] * f[v[0]] + l[1] * f[v[1]] + l[2] * f[v[2]])
                .collect(),
        ))
    }

    /// Like [`TransferMap::apply`], clamped to `[0, 1]`.
    pub fn apply_phase(&self, field: &FeField) -> Result<FeField> {
        let mut out = self.apply(field)?;
        for x in &mut out.values {
            *x = x.clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

/// Interpolates `field` from `old` onto the vertices of `new`.
pub fn transfer(field: &FeField, old: &Triangulation, new: &Triangulation) -> Result<FeField> {
    TransferMap::new(old, new)?.apply(field)
}
