//! CSV step records, legacy VTK surfaces, and checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_config, to_config_string, ScenarioSpec, State, StepRecord};
use crate::error::{Error, Result};
use crate::fem::FeField;
use crate::geometry::SurfaceChart;
use crate::mesh::io::{mesh_from_str, mesh_to_string};
use crate::mesh::Triangulation;

const CSV_HEADER: &str =
    "time,crack_length,n_triangles,elastic,dissipation,total,sweeps,mesh_updates,sign_violations";

/// CSV text of the records: header plus one row per record.
pub fn records_to_csv(records: &[StepRecord]) -> String {
    let mut s = String::with_capacity(128 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{},{}",
            r.time,
            r.crack_length,
            r.n_triangles,
            r.elastic,
            r.dissipation,
            r.total,
            r.altmin_sweeps,
            r.mesh_updates,
            r.stiffness_sign_violations
        );
    }
    s
}

pub fn export_csv(records: &[StepRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Input("no records to export".into()));
    }
    fs::write(path, records_to_csv(records))?;
    Ok(())
}

/// Reads CSV text back; columns not stored in the file are zero.
pub fn parse_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(Error::parse(1, "missing or unexpected CSV header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::parse(
                line_no,
                format!("expected 9 columns, found {}", cols.len()),
            ));
        }
        let f = |k: usize| {
            cols[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("bad number `{}`", cols[k])))
        };
        let n = |k: usize| {
            cols[k]
                .parse::<usize>()
                .map_err(|_| Error::parse(line_no, format!("bad integer `{}`", cols[k])))
        };
        out.push(StepRecord {
            time: f(0)?,
            crack_length: f(1)?,
            n_triangles: n(2)?,
            elastic: f(3)?,
            dissipation: f(4)?,
            total: f(5)?,
            altmin_sweeps: n(6)?,
            mesh_updates: n(7)?,
            stiffness_sign_violations: n(8)?,
            irreversibility_violation: 0.0,
            v_min: 0.0,
            v_max: 0.0,
        });
    }
    Ok(out)
}

/// Legacy ASCII unstructured grid of the deformed surface `φ(x) + u(x) a₃(x)`.
/// Cells whose smallest nodal `v` is below `threshold` are left out.
pub fn write_vtk(
    path: &Path,
    mesh: &Triangulation,
    u: &FeField,
    v: &FeField,
    chart: &SurfaceChart,
    threshold: f64,
) -> Result<()> {
    u.check_mesh(mesh)?;
    v.check_mesh(mesh)?;
    let cells: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| {
            mesh.triangle(t)
                .iter()
                .map(|&i| v.values[i])
                .fold(f64::INFINITY, f64::min)
                >= threshold
        })
        .collect();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nphase-field shell\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for (i, &x) in mesh.vertices().iter().enumerate() {
        let p = chart.embed(x);
        let n = chart.normal(x);
        let w = u.values[i];
        let _ = writeln!(
            s,
            "{:.16e} {:.16e} {:.16e}",
            p[0] + w * n[0],
            p[1] + w * n[1],
            p[2] + w * n[2]
        );
    }
    let _ = writeln!(s, "CELLS {} {}", cells.len(), 4 * cells.len());
    for &t in &cells {
        let [a, b, c] = mesh.triangle(t);
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {}", cells.len());
    for (name, f) in [("v", v), ("u", u)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for &t in &cells {
            let mean = mesh.triangle(t).iter().map(|&i| f.values[i]).sum::<f64>() / 3.0;
            let _ = writeln!(s, "{mean:.16e}");
        }
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
    for (name, f) in [("v_nodal", v), ("u_nodal", u)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in &f.values {
            let _ = writeln!(s, "{x:.16e}");
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// Writes `{stem}_cut.vtk` (thresholded) and `{stem}_full.vtk` into `dir`.
pub fn export_vtk(
    dir: &Path,
    stem: &str,
    state: &State,
    chart: &SurfaceChart,
    threshold: f64,
) -> Result<[PathBuf; 2]> {
    let cut = dir.join(format!("{stem}_cut.vtk"));
    let full = dir.join(format!("{stem}_full.vtk"));
    write_vtk(&cut, &state.mesh, &state.u, &state.v, chart, threshold)?;
    write_vtk(
        &full,
        &state.mesh,
        &state.u,
        &state.v,
        chart,
        f64::NEG_INFINITY,
    )?;
    Ok([cut, full])
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    time: f64,
    step: usize,
    params_hash: String,
}

/// A state read back from disk together with its scenario.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub state: State,
    pub spec: ScenarioSpec,
    pub params_hash: String,
}

fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn field_to_string(f: &FeField) -> String {
    let mut s = String::with_capacity(24 * f.len());
    for x in &f.values {
        let _ = writeln!(s, "{x:?}");
    }
    s
}

fn field_from_str(text: &str) -> Result<FeField> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(i + 1, format!("bad nodal value `{l}`")))
        })
        .collect::<Result<Vec<_>>>()
        .map(FeField::new)
}

/// Directory with `mesh.txt`, `u.txt`, `v.txt`, `scenario.cfg` and `meta.json`.
pub fn write_checkpoint(dir: &Path, state: &State, spec: &ScenarioSpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = to_config_string(spec);
    fs::write(dir.join("mesh.txt"), mesh_to_string(&state.mesh))?;
    fs::write(dir.join("u.txt"), field_to_string(&state.u))?;
    fs::write(dir.join("v.txt"), field_to_string(&state.v))?;
    fs::write(dir.join("scenario.cfg"), &cfg)?;
    let meta = Meta {
        time: state.time,
        step: state.step,
        params_hash: hash_hex(&cfg),
    };
    let json = serde_json::to_string(&meta).map_err(|e| Error::Input(e.to_string()))?;
    fs::write(dir.join("meta.json"), json + "\n")?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let cfg = fs::read_to_string(dir.join("scenario.cfg"))?;
    let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::parse(e.line(), e.to_string()))?;
    if meta.params_hash != hash_hex(&cfg) {
        return Err(Error::Input(
            "checkpoint scenario does not match its recorded hash".into(),
        ));
    }
    let mesh = mesh_from_str(&fs::read_to_string(dir.join("mesh.txt"))?)?;
    let u = field_from_str(&fs::read_to_string(dir.join("u.txt"))?)?;
    let v = field_from_str(&fs::read_to_string(dir.join("v.txt"))?)?;
    u.check_mesh(&mesh)?;
    v.check_mesh(&mesh)?;
    Ok(Checkpoint {
        spec: parse_config(&cfg)?,
        params_hash: meta.params_hash,
        state: State {
            mesh,
            u,
            v,
            time: meta.time,
            step: meta.step,
        },
    })
}
