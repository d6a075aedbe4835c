//! Quasi-static time loop with adaptive remeshing, scenario presets, and
//! output writers.

mod config;
mod output;

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

pub use config::{format_number, load_config, parse_config, to_config_string};
pub use output::{
    export_csv, export_vtk, parse_csv, read_checkpoint, records_to_csv, write_checkpoint,
    write_vtk, Checkpoint,
};

use crate::adaptation::{
    build_metric, remesh, Features, MetricOptions, RemeshOptions, TransferMap,
};
use crate::error::{Error, Result};
use crate::estimator::{localized_estimator, EstimatorInput, QuadratureRule};
use crate::fem::{DirichletData, FeField, FeSpace, ModelParams};
use crate::geometry::{Rect, SurfaceChart};
use crate::mesh::{
    build_scenario_mesh, check_stiffness_sign, BcSegment, BoundaryLabel, Circle, NotchSpec,
    ScenarioGeometry, Triangulation,
};
use crate::solver::{alternate_minimize, solve_displacement, solve_phase, AltMinOptions};

/// Surface selector; the chart domain follows from the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartSpec {
    Flat { domain: Rect },
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64, xbar: f64, ybar: f64 },
}

impl ChartSpec {
    pub fn domain(&self) -> Rect {
        match *self {
            ChartSpec::Flat { domain } => domain,
            ChartSpec::Cylinder { length, .. } => Rect::new(-FRAC_PI_2, FRAC_PI_2, 0.0, length),
            ChartSpec::Sphere { xbar, ybar, .. } => Rect::new(-xbar, xbar, -ybar, ybar),
        }
    }

    pub fn build(&self, lambda: f64, mu: f64) -> Result<SurfaceChart> {
        let chart = match *self {
            ChartSpec::Flat { domain } => SurfaceChart::flat(domain),
            ChartSpec::Cylinder { radius, length } => SurfaceChart::cylinder(radius, length)?,
            ChartSpec::Sphere { radius, xbar, ybar } => SurfaceChart::sphere(radius, xbar, ybar)?,
        };
        chart.with_lame(lambda, mu)
    }
}

/// Model, solver and adaptation parameters of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParams {
    /// Adaptation tolerance `TOL`.
    pub tol: f64,
    /// Relative element-count stagnation threshold `TOL_m`.
    pub tol_m: f64,
    /// Phase-field increment threshold `TOL_v` (sup norm).
    pub tol_v: f64,
    /// Maximum alternating sweeps per mesh `MaxIt`.
    pub max_it: usize,
    pub tau: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Smallest element size the metric may prescribe.
    pub h_min: f64,
    /// Largest element size the metric may prescribe.
    pub h_max: f64,
    /// Cap on remeshings per time step.
    pub max_mesh_updates: usize,
    /// Remesh at all; `false` keeps the initial mesh.
    pub adapt: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            tol: 1e-3,
            tol_m: 1e-2,
            tol_v: 2e-3,
            max_it: 8,
            tau: 1e-2,
            alpha: 1e-3,
            epsilon: 5e-3,
            eta: 1e-5,
            kappa: 1.0,
            lambda: 0.0,
            mu: 1.0,
            h_min: 1e-3,
            h_max: 0.1,
            max_mesh_updates: 6,
            adapt: true,
        }
    }
}

impl RunParams {
    pub fn model(&self) -> ModelParams {
        ModelParams {
            epsilon: self.epsilon,
            eta: self.eta,
            kappa: self.kappa,
            alpha: self.alpha,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("tol", self.tol),
            ("tol_m", self.tol_m),
            ("tol_v", self.tol_v),
            ("h_min", self.h_min),
            ("h_max", self.h_max),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive (got {x})"
                )));
            }
        }
        if self.max_it < 1 {
            return Err(Error::InvalidParameter("max_it must be at least 1".into()));
        }
        MetricOptions::new(self.h_min, self.h_max)?;
        self.model().validate()
    }
}

/// Complete description of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub chart: ChartSpec,
    pub geometry: ScenarioGeometry,
    pub final_time: f64,
    pub params: RunParams,
    /// Size of the initial mesh.
    pub target_h: f64,
    /// Seed of the remesher's vertex ordering.
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.geometry.validate()?;
        let (a, b) = (self.chart.domain(), self.geometry.domain);
        let gap = (a.x0 - b.x0)
            .abs()
            .max((a.x1 - b.x1).abs())
            .max((a.y0 - b.y0).abs())
            .max((a.y1 - b.y1).abs());
        if gap > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "geometry domain {b:?} differs from the chart domain {a:?}"
            )));
        }
        if !(self.target_h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target_h must be positive (got {})",
                self.target_h
            )));
        }
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "final time must be non-negative (got {})",
                self.final_time
            )));
        }
        self.n_steps().map(|_| ())
    }

    /// `k = T_f/τ`, which must be an integer to within `10⁻⁹`.
    pub fn n_steps(&self) -> Result<usize> {
        let k = self.final_time / self.params.tau;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "final time {} is not an integer multiple of tau = {}",
                self.final_time, self.params.tau
            )));
        }
        Ok(k.round() as usize)
    }

    pub fn surface(&self) -> Result<SurfaceChart> {
        self.chart.build(self.params.lambda, self.params.mu)
    }

    /// Notched cylinder of radius 1 and length `length`, clamped on the
    /// bottom edge of a strip extension.
    pub fn cylinder(length: f64) -> Self {
        let chart = ChartSpec::Cylinder {
            radius: 1.0,
            length,
        };
        let domain = chart.domain();
        let notch = Rect::new(-1e-3, 1e-3, 0.0, 0.3);
        let extension = Rect::new(domain.x0, domain.x1, -0.1, 0.0);
        ScenarioSpec {
            chart,
            geometry: ScenarioGeometry {
                domain,
                extension: Some(extension),
                notch: Some(NotchSpec { rect: notch }),
                holes: Vec::new(),
                bc: standard_bc(extension.x0, extension.x1, extension.y0, notch),
            },
            final_time: 2.3,
            params: RunParams::default(),
            target_h: 0.05,
            seed: 0,
        }
    }

    /// Notched spherical band of radius 1 with latitude half-width `ybar`.
    pub fn sphere(ybar: f64) -> Self {
        let chart = ChartSpec::Sphere {
            radius: 1.0,
            xbar: FRAC_PI_2,
            ybar,
        };
        let domain = chart.domain();
        let notch = Rect::new(-1e-3, 1e-3, -ybar, 0.3 - ybar);
        let extension = Rect::new(domain.x0, domain.x1, -ybar - 0.1, -ybar);
        ScenarioSpec {
            chart,
            geometry: ScenarioGeometry {
                domain,
                extension: Some(extension),
                notch: Some(NotchSpec { rect: notch }),
                holes: Vec::new(),
                bc: standard_bc(extension.x0, extension.x1, extension.y0, notch),
            },
            final_time: 2.3,
            params: RunParams::default(),
            target_h: 0.05,
            seed: 0,
        }
    }

    pub fn with_hole(mut self, center: [f64; 2], radius: f64) -> Self {
        self.geometry.holes.push(Circle { center, radius });
        self
    }
}

/// Opening load on the line `y = y`: `+t` right of the notch, `−t` left of it,
/// `0` under it.
pub fn standard_bc(x0: f64, x1: f64, y: f64, notch: Rect) -> Vec<BcSegment> {
    let mut bc = vec![
        BcSegment {
            label: BoundaryLabel::DirichletPlus,
            a: [notch.x1, y],
            b: [x1, y],
        },
        BcSegment {
            label: BoundaryLabel::DirichletMinus,
            a: [x0, y],
            b: [notch.x0, y],
        },
    ];
    if notch.x1 > notch.x0 {
        bc.push(BcSegment {
            label: BoundaryLabel::DirichletZero,
            a: [notch.x0, y],
            b: [notch.x1, y],
        });
    }
    bc
}

/// Boundary datum `g(t)` of a Dirichlet label.
pub fn boundary_value(label: BoundaryLabel, t: f64) -> Result<f64> {
    match label {
        BoundaryLabel::DirichletPlus => Ok(t),
        BoundaryLabel::DirichletMinus => Ok(-t),
        BoundaryLabel::DirichletZero => Ok(0.0),
        other => Err(Error::NotDirichlet(other)),
    }
}

/// Nodal Dirichlet values at time `t`. A vertex shared by a `±t` edge and a
/// zero edge takes the `±t` value.
pub fn dirichlet_data(mesh: &Triangulation, t: f64) -> Result<DirichletData> {
    let mut data = DirichletData::none(mesh.n_vertices());
    let mut rank = vec![0u8; mesh.n_vertices()];
    for be in mesh.boundary_edges() {
        if !be.label.is_dirichlet() {
            continue;
        }
        let r = if be.label == BoundaryLabel::DirichletZero {
            1
        } else {
            2
        };
        let g = boundary_value(be.label, t)?;
        for v in be.v {
            if r > rank[v] {
                rank[v] = r;
                data.values[v] = Some(g);
            }
        }
    }
    Ok(data)
}

/// Diagnostics of one accepted time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    /// `κ⁻¹ 𝓓_h(v_h)`.
    pub crack_length: f64,
    pub n_triangles: usize,
    pub elastic: f64,
    pub dissipation: f64,
    pub total: f64,
    pub altmin_sweeps: usize,
    pub mesh_updates: usize,
    pub stiffness_sign_violations: usize,
    /// `max(0, max_l v_l − ṽ_l)` against the transferred previous phase field.
    pub irreversibility_violation: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Mesh and fields at the end of a time step.
#[derive(Clone, Debug)]
pub struct State {
    pub mesh: Triangulation,
    pub u: FeField,
    pub v: FeField,
    pub time: f64,
    pub step: usize,
}

impl State {
    /// Sound, unloaded state `u ≡ 0`, `v ≡ 1`.
    pub fn initial(mesh: Triangulation) -> Self {
        let n = mesh.n_vertices();
        State {
            mesh,
            u: FeField::constant(n, 0.0),
            v: FeField::constant(n, 1.0),
            time: 0.0,
            step: 0,
        }
    }
}

/// Controls that do not change the computed solution.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Stop after this many steps.
    pub max_steps: Option<usize>,
    /// Where to dump the last accepted state if a step fails.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<StepRecord>,
    pub state: State,
}

/// Runs the scenario without callbacks.
pub fn run(spec: &ScenarioSpec) -> Result<RunSummary> {
    run_with(spec, &RunOptions::default(), |_, _| Ok(()))
}

/// Runs the scenario, calling `on_step` after each accepted step.
pub fn run_with(
    spec: &ScenarioSpec,
    opts: &RunOptions,
    on_step: impl FnMut(&StepRecord, &State) -> Result<()>,
) -> Result<RunSummary> {
    spec.validate()?;
    let mesh = build_scenario_mesh(&spec.geometry, spec.target_h)?;
    run_from(spec, State::initial(mesh), 0, opts, on_step)
}

/// Continues from `state` with time steps `first, first + 1, …`; `max_steps`
/// counts the steps taken by this call. Resuming a checkpoint of step `i`
/// uses `first = i + 1`.
pub fn run_from(
    spec: &ScenarioSpec,
    mut state: State,
    first: usize,
    opts: &RunOptions,
    mut on_step: impl FnMut(&StepRecord, &State) -> Result<()>,
) -> Result<RunSummary> {
    spec.validate()?;
    let chart = spec.surface()?;
    let k = spec.n_steps()?;
    let last = opts
        .max_steps
        .map_or(k, |m| k.min((first + m).saturating_sub(1)));
    let mut records = Vec::with_capacity((last + 1).saturating_sub(first));
    for i in first..=last {
        let t = i as f64 * spec.params.tau;
        match advance(spec, &chart, &state, i, t) {
            Ok((next, record)) => {
                log::info!(
                    "step {i} t = {t:.4}: crack length {:.6}, {} triangles, {} sweeps, {} remeshes",
                    record.crack_length,
                    record.n_triangles,
                    record.altmin_sweeps,
                    record.mesh_updates
                );
                state = next;
                on_step(&record, &state)?;
                records.push(record);
            }
            Err(e) => {
                if let Some(dir) = &opts.checkpoint_dir {
                    let dump = dir.join(format!("failed_step_{i:05}"));
                    match write_checkpoint(&dump, &state, spec) {
                        Ok(()) => {
                            log::error!("step {i} failed; last state written to {}", dump.display())
                        }
                        Err(w) => log::error!(
                            "step {i} failed and the checkpoint could not be written: {w}"
                        ),
                    }
                }
                return Err(e);
            }
        }
    }
    Ok(RunSummary { records, state })
}

fn altmin_options(p: &RunParams) -> AltMinOptions {
    AltMinOptions {
        tol_v: p.tol_v,
        max_sweeps: p.max_it,
        ..AltMinOptions::default()
    }
}

/// One time step: alternating minimization interleaved with remeshing until
/// both the element count and the phase field stagnate, then the final
/// displacement/phase pair.
fn advance(
    spec: &ScenarioSpec,
    chart: &SurfaceChart,
    state: &State,
    step: usize,
    t: f64,
) -> Result<(State, StepRecord)> {
    let p = &spec.params;
    let model = p.model();
    let alt = altmin_options(p);
    let metric_opts = MetricOptions::new(p.h_min, p.h_max)?;
    let features = Features {
        holes: spec.geometry.holes.clone(),
    };
    let remesh_opts = RemeshOptions {
        seed: spec.seed.wrapping_add(step as u64),
        ..RemeshOptions::default()
    };

    let mut mesh = state.mesh.clone();
    let mut prev = state.v.clone();
    let mut u = state.u.clone();
    let mut v = state.v.clone();
    let mut sweeps = 0;
    let mut updates = 0;
    loop {
        let space = FeSpace::new(&mesh, chart)?;
        let dirichlet = dirichlet_data(&mesh, t)?;
        let res = alternate_minimize(&space, &u, &v, &prev, &dirichlet, &model, &alt)?;
        sweeps += res.iterations;
        u = res.u;
        v = res.v;
        if !p.adapt || updates >= p.max_mesh_updates {
            break;
        }
        let report = localized_estimator(
            &space,
            EstimatorInput {
                u: &u,
                v: &v,
                v_bound: &prev,
            },
            &model,
            QuadratureRule::Standard,
        )?;
        let metric = build_metric(&report, &mesh, p.tol, &metric_opts)?;
        let (new_mesh, rep) = remesh(&metric, &mesh, &features, &remesh_opts)?;
        log::debug!(
            "remesh {updates}: {} -> {} triangles, {:.1}% edges in range",
            mesh.n_triangles(),
            new_mesh.n_triangles(),
            100.0 * rep.fraction_in_range
        );
        let map = TransferMap::new(&mesh, &new_mesh)?;
        let change = (new_mesh.n_triangles() as f64 - mesh.n_triangles() as f64).abs()
            / mesh.n_triangles() as f64;
        u = map.apply(&u)?;
        prev = map.apply_phase(&prev)?;
        v = map.apply_phase(&v)?;
        for (x, b) in v.values.iter_mut().zip(&prev.values) {
            *x = x.min(*b);
        }
        mesh = new_mesh;
        updates += 1;
        if change < p.tol_m && res.final_increment < p.tol_v {
            break;
        }
    }

    let space = FeSpace::new(&mesh, chart)?;
    let dirichlet = dirichlet_data(&mesh, t)?;
    u = solve_displacement(&space, &v, &dirichlet, &model, Some(&u), alt.cg)?;
    v = solve_phase(&space, &u, &prev, &prev, &model, Some(&v), &alt.qp)?;
    sweeps += 1;

    let energy = space.energy(&u, &v, None, &model)?;
    let violation = v
        .values
        .iter()
        .zip(&prev.values)
        .fold(0.0f64, |m, (a, b)| m.max(a - b));
    let (v_min, v_max) = v
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let record = StepRecord {
        time: t,
        crack_length: space.crack_length(&v, &model)?,
        n_triangles: mesh.n_triangles(),
        elastic: energy.elastic,
        dissipation: energy.dissipation,
        total: energy.total,
        altmin_sweeps: sweeps,
        mesh_updates: updates,
        stiffness_sign_violations: check_stiffness_sign(&mesh, chart)?.violations.len(),
        irreversibility_violation: violation,
        v_min,
        v_max,
    };
    Ok((
        State {
            mesh,
            u,
            v,
            time: t,
            step,
        },
        record,
    ))
}
