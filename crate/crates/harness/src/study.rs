//! Scenario pipelines: single runs, convergence studies, condition sweeps
//! and the torus demo.

use crate::config::{ConfigError, MeshConfig, ScenarioConfig, Shape};
use crate::report::{ConvergenceReport, OutputError};
use gibc_core::assembly::{AssemblyError, ImpedanceKind};
use gibc_core::calderon::{condition_report, solve, CalderonError, SystemBuilder, MAX_CONDITION_DOFS};
use gibc_core::cq::{build_context, radau_tableau, CqContext, CqError, Symmetry};
use gibc_core::geom::Vec3;
use gibc_core::mesh::{generate_icosphere, generate_torus, read_off, refine, AnalyticSurface, MeshError, TriangleSurfaceMesh};
use gibc_core::scattering::{
    evaluate_fields, incident_traces, is_exterior, solve_densities_multi, BoundaryDensities, FieldObservation, Impedance,
    ScatteringError,
};
use gibc_core::trace_space::{build_rt0, RtSpace};
use gibc_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    Calderon(#[from] CalderonError),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Invalid(String),
    #[error("scenario {scenario} failed: {source}")]
    Scenario { scenario: String, source: Box<StudyError> },
}

impl From<AssemblyError> for StudyError {
    fn from(e: AssemblyError) -> Self {
        StudyError::Calderon(e.into())
    }
}

fn in_scenario<T>(label: impl Fn() -> String, r: Result<T, StudyError>) -> Result<T, StudyError> {
    r.map_err(|e| StudyError::Scenario { scenario: label(), source: Box::new(e) })
}

pub fn build_mesh(cfg: &MeshConfig, level: u32) -> Result<TriangleSurfaceMesh, StudyError> {
    Ok(match cfg.shape {
        Shape::Sphere => generate_icosphere(level, cfg.radius)?,
        Shape::Torus => {
            let mut mesh = generate_torus(cfg.major_radius, cfg.minor_radius, cfg.n_major, cfg.n_minor)?;
            let snap = AnalyticSurface::Torus { major_radius: cfg.major_radius, minor_radius: cfg.minor_radius };
            for _ in 0..level {
                mesh = refine(&mesh, Some(&snap))?;
            }
            mesh
        }
        Shape::Off => {
            let path = cfg.path.as_ref().ok_or_else(|| StudyError::Invalid("mesh.path is required".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| StudyError::Invalid(format!("cannot read {}: {e}", path.display())))?;
            let mut mesh = read_off(&text)?;
            for _ in 0..level {
                mesh = refine(&mesh, None)?;
            }
            mesh
        }
    })
}

pub fn build_space(cfg: &MeshConfig, level: u32) -> Result<Arc<RtSpace>, StudyError> {
    Ok(Arc::new(build_rt0(Arc::new(build_mesh(cfg, level)?))))
}

pub fn evaluation_points(config: &ScenarioConfig, mesh: &TriangleSurfaceMesh) -> Result<Vec<Vec3>, StudyError> {
    let points: Vec<Vec3> = config.evaluation.points.iter().map(|p| Vec3::from_array(*p)).collect();
    for p in &points {
        if !is_exterior(mesh, *p) {
            return Err(StudyError::Invalid(format!("evaluation point {:?} is not exterior to the scatterer", p.to_array())));
        }
    }
    Ok(points)
}

pub fn context(config: &ScenarioConfig, steps: usize) -> Result<CqContext, StudyError> {
    Ok(build_context(&radau_tableau(config.time.stages)?, steps, config.time.final_time)?)
}

/// Real `(E, H)` values at the output times `t_0 .. t_N`, per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub times: Vec<f64>,
    /// `values[p][n]` is `(E₁, E₂, E₃, H₁, H₂, H₃)` at point `p`, time `t_n`.
    pub values: Vec<Vec<[f64; 6]>>,
}

impl FieldSeries {
    pub fn from_observation(obs: &FieldObservation, tau: f64) -> Self {
        let times: Vec<f64> = (0..obs.times()).map(|n| n as f64 * tau).collect();
        let values = (0..obs.points.len())
            .map(|p| {
                (0..obs.times())
                    .map(|n| {
                        let (e, h) = obs.at(n, p);
                        [e.x, e.y, e.z, h.x, h.y, h.z]
                    })
                    .collect()
            })
            .collect();
        FieldSeries { times, values }
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().flatten().map(norm6).fold(0.0, f64::max)
    }

    /// Largest Euclidean `(E, H)` error against a finer series on a grid that
    /// contains every time of `self`.
    pub fn max_error(&self, reference: &FieldSeries) -> Result<f64, StudyError> {
        let (n, r) = (self.steps(), reference.steps());
        if r % n != 0 || self.values.len() != reference.values.len() {
            return Err(StudyError::Invalid(format!("reference with {r} steps cannot be compared to {n} steps")));
        }
        let stride = r / n;
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&reference.values) {
            for k in 0..=n {
                let d: [f64; 6] = std::array::from_fn(|c| a[k][c] - b[k * stride][c]);
                worst = worst.max(norm6(&d));
            }
        }
        Ok(worst)
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        #[derive(Serialize)]
        struct Row {
            point: usize,
            step: usize,
            t: f64,
            e1: f64,
            e2: f64,
            e3: f64,
            h1: f64,
            h2: f64,
            h3: f64,
        }
        let rows: Vec<Row> = self
            .values
            .iter()
            .enumerate()
            .flat_map(|(p, series)| {
                series.iter().enumerate().map(move |(n, v)| Row {
                    point: p,
                    step: n,
                    t: self.times[n],
                    e1: v[0],
                    e2: v[1],
                    e3: v[2],
                    h1: v[3],
                    h2: v[4],
                    h3: v[5],
                })
            })
            .collect();
        crate::report::write_csv(path, &rows)
    }

    pub fn read(path: &Path) -> Result<Self, OutputError> {
        let bad = |message: String| OutputError::Cache { path: path.to_path_buf(), message };
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<[f64; 6]>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<f64, OutputError> {
                record.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("bad field {i}")))
            };
            let (p, n) = (num(0)? as usize, num(1)? as usize);
            if p == values.len() {
                values.push(Vec::new());
            }
            if p + 1 != values.len() || n != values[p].len() {
                return Err(bad("rows out of order".into()));
            }
            if p == 0 {
                times.push(num(2)?);
            }
            values[p].push([num(3)?, num(4)?, num(5)?, num(6)?, num(7)?, num(8)?]);
        }
        if values.is_empty() || values.iter().any(|v| v.len() != times.len()) {
            return Err(bad("incomplete series".into()));
        }
        Ok(FieldSeries { times, values })
    }
}

fn norm6(v: &[f64; 6]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of one scattering run.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub dofs: usize,
    pub mesh_width: f64,
    pub tau: f64,
    pub densities: BoundaryDensities,
    pub observation: FieldObservation,
    pub fields: FieldSeries,
}

impl SingleRun {
    /// `‖φ(t_n)‖ + ‖ψ(t_n)‖` for `n = 0..=N`.
    pub fn density_norms(&self) -> Vec<f64> {
        (0..self.densities.phi.steps()).map(|n| self.densities.norm_at(n)).collect()
    }
}

/// Densities and fields for each impedance setting on one mesh level and
/// one step count. Layer matrices are shared across the settings.
pub fn run_scattering(
    config: &ScenarioConfig,
    level: u32,
    steps: usize,
    settings: &[Impedance],
) -> Result<Vec<SingleRun>, StudyError> {
    let space = build_space(&config.mesh, level)?;
    let points = evaluation_points(config, space.mesh())?;
    let ctx = context(config, steps)?;
    let builder = SystemBuilder::new(space.clone(), config.quadrature_config())?;
    let traces = incident_traces(&config.wave(), &space, &ctx);
    let all = solve_densities_multi(&builder, &ctx, &traces, settings, &config.solver_config()?)?;
    all.into_iter()
        .map(|densities| {
            let observation = evaluate_fields(&space, &ctx, &densities, &points)?;
            let fields = FieldSeries::from_observation(&observation, ctx.tau);
            Ok(SingleRun {
                dofs: space.dof_count(),
                mesh_width: space.mesh().mesh_width(),
                tau: ctx.tau,
                densities,
                observation,
                fields,
            })
        })
        .collect()
}

pub fn run_single(config: &ScenarioConfig) -> Result<SingleRun, StudyError> {
    let imp = Impedance { kind: config.impedance_kind()?, delta: config.impedance.delta };
    let label = || format!("single run (level {}, N = {})", config.mesh.level, config.time.steps);
    Ok(in_scenario(label, run_scattering(config, config.mesh.level, config.time.steps, &[imp]))?.remove(0))
}

/// Content address of a reference run.
pub fn reference_key(config: &ScenarioConfig, level: u32, steps: usize, kind: ImpedanceKind, delta: f64) -> String {
    let text = format!(
        "mesh={:?}|level={level}|steps={steps}|stages={}|T={:e}|kind={kind}|delta={delta:e}|wave={:?}|points={:?}|quad={:?}|solver={:?}",
        config.mesh,
        config.time.stages,
        config.time.final_time,
        config.wave,
        config.evaluation.points,
        config.quadrature,
        config.solver.kind,
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Reference field series, loaded from the cache when present.
fn reference_fields(
    config: &ScenarioConfig,
    cache: Option<&Path>,
    level: u32,
    steps: usize,
    settings: &[Impedance],
) -> Result<Vec<FieldSeries>, StudyError> {
    let paths: Vec<Option<PathBuf>> = settings
        .iter()
        .map(|imp| cache.map(|dir| dir.join(format!("{}.csv", reference_key(config, level, steps, imp.kind, imp.delta)))))
        .collect();
    let cached: Vec<Option<FieldSeries>> =
        paths.iter().map(|p| p.as_ref().filter(|p| p.exists()).and_then(|p| FieldSeries::read(p).ok())).collect();
    if cached.iter().all(|c| c.is_some()) {
        return Ok(cached.into_iter().flatten().collect());
    }
    let label = || format!("reference (level {level}, N = {steps})");
    let runs = in_scenario(label, run_scattering(config, level, steps, settings))?;
    for (run, path) in runs.iter().zip(&paths) {
        if let Some(p) = path {
            run.fields.write(p)?;
        }
    }
    Ok(runs.into_iter().map(|r| r.fields).collect())
}

/// Field errors at the evaluation points for the step ladder against a
/// reference with `reference_steps` steps on the same mesh.
pub fn run_time_convergence(config: &ScenarioConfig, cache: Option<&Path>) -> Result<ConvergenceReport, StudyError> {
    let study = &config.study;
    let finest = *study.time_ladder.iter().max().ok_or_else(|| StudyError::Invalid("empty time ladder".into()))?;
    if study.reference_steps < 4 * finest || study.time_ladder.iter().any(|n| !study.reference_steps.is_multiple_of(*n)) {
        return Err(StudyError::Invalid(format!(
            "reference_steps = {} must be a multiple of every ladder entry and at least 4 × {finest}",
            study.reference_steps
        )));
    }
    let imp = Impedance { kind: config.impedance_kind()?, delta: config.impedance.delta };
    let level = config.mesh.level;
    let reference = reference_fields(config, cache, level, study.reference_steps, &[imp])?.remove(0);
    let mut data = Vec::new();
    for &n in &study.time_ladder {
        let label = || format!("time ladder N = {n}");
        let run = in_scenario(label, run_scattering(config, level, n, &[imp]))?.remove(0);
        data.push((n as f64, run.tau, run.fields.max_error(&reference)?));
    }
    Ok(ConvergenceReport::new(
        format!("time m={} delta={}", config.time.stages, imp.delta),
        "max over t_n of |(E,H) - (E,H)_ref| at the evaluation points",
        format!("N = {} on level {level}", study.reference_steps),
        &data,
    ))
}

/// Field errors over the level ladder against the reference level, one
/// report per δ in `study.deltas`.
pub fn run_space_convergence(config: &ScenarioConfig, cache: Option<&Path>) -> Result<Vec<ConvergenceReport>, StudyError> {
    let study = &config.study;
    if study.level_ladder.is_empty() || study.level_ladder.iter().any(|l| *l >= study.reference_level) {
        return Err(StudyError::Invalid("level ladder must lie strictly below the reference level".into()));
    }
    let kind = config.impedance_kind()?;
    let settings: Vec<Impedance> = study.deltas.iter().map(|&delta| Impedance { kind, delta }).collect();
    let steps = config.time.steps;
    let references = reference_fields(config, cache, study.reference_level, steps, &settings)?;
    let mut data: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); settings.len()];
    for &level in &study.level_ladder {
        let label = || format!("level ladder {level}");
        let runs = in_scenario(label, run_scattering(config, level, steps, &settings))?;
        for (c, run) in runs.iter().enumerate() {
            data[c].push((level as f64, run.mesh_width, run.fields.max_error(&references[c])?));
        }
    }
    Ok(settings
        .iter()
        .zip(data)
        .map(|(imp, d)| {
            ConvergenceReport::new(
                format!("space m={} N={steps} delta={}", config.time.stages, imp.delta),
                "max over t_n of |(E,H) - (E,H)_ref| at the evaluation points",
                format!("level {} with N = {steps}", study.reference_level),
                &d,
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub l: usize,
    pub stage: usize,
    pub s_re: f64,
    pub s_im: f64,
    pub condition: f64,
    pub norm: f64,
    pub inverse_norm: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Row obtained from its conjugate partner rather than computed.
    pub mirrored: bool,
}

#[derive(Debug, Clone)]
pub struct ConditionSweep {
    pub dofs: usize,
    pub rows: Vec<ConditionRow>,
}

impl ConditionSweep {
    pub fn max_condition(&self) -> f64 {
        self.rows.iter().map(|r| r.condition).fold(0.0, f64::max)
    }

    pub fn max_iterations(&self) -> usize {
        self.rows.iter().map(|r| r.iterations).max().unwrap_or(0)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// Condition numbers and GMRES iteration counts along the contour of the
/// configured step count.
pub fn run_condition_sweep(config: &ScenarioConfig) -> Result<ConditionSweep, StudyError> {
    let space = build_space(&config.mesh, config.mesh.level)?;
    if space.dof_count() > MAX_CONDITION_DOFS {
        return Err(StudyError::Invalid(format!(
            "{} DOFs exceed the dense SVD limit of {MAX_CONDITION_DOFS}; use a coarser mesh",
            space.dof_count()
        )));
    }
    let ctx = context(config, config.time.steps)?;
    let builder = SystemBuilder::new(space.clone(), config.quadrature_config())?;
    let kind = config.impedance_kind()?;
    let solver = config.solver_config()?;
    let n2 = 2 * space.dof_count();
    let len = ctx.len();
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for l in ctx.active_indices(Symmetry::Conjugate) {
        for (stage, &s) in ctx.points[l].frequencies.iter().enumerate() {
            let system = builder.build(s, kind, config.impedance.delta)?;
            let report = condition_report(&system)?;
            let mut rhs: Vec<C64> = (0..n2).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let scale = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            rhs.iter_mut().for_each(|z| *z /= scale);
            let (iterations, residual, converged) = match solve(&system, &rhs, solver.tolerance, solver.max_iterations) {
                Ok(sol) => (sol.iterations, sol.residual, true),
                Err(CalderonError::NotConverged { iterations, residual }) => (iterations, residual, false),
                Err(e) => return Err(e.into()),
            };
            let row = ConditionRow {
                l,
                stage,
                s_re: s.re,
                s_im: s.im,
                condition: report.condition,
                norm: report.norm,
                inverse_norm: report.inverse_norm,
                iterations,
                residual,
                converged,
                mirrored: false,
            };
            if l != 0 && 2 * l != len {
                rows.push(ConditionRow { l: len - l, s_im: -s.im, mirrored: true, ..row.clone() });
            }
            rows.push(row);
        }
    }
    rows.sort_by_key(|r| (r.l, r.stage));
    Ok(ConditionSweep { dofs: space.dof_count(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSample {
    pub frame: usize,
    pub t: f64,
    pub x1: f64,
    pub x3: f64,
    /// False for points inside the scatterer or in the clearance band.
    pub valid: bool,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub scattered_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TorusDemo {
    pub run: SingleRun,
    pub samples: Vec<GridSample>,
    /// Largest scattered field magnitude over the grid and all output times.
    pub peak_scattered: f64,
    /// Largest scattered field magnitude over the grid at times before the
    /// incident wave reaches the scatterer.
    pub early_scattered: f64,
    pub first_arrival: f64,
}

/// Total field on the plane `x₂ = 0` at the configured frames.
pub fn run_torus_demo(config: &ScenarioConfig) -> Result<TorusDemo, StudyError> {
    let demo = &config.torus_demo;
    let mesh = build_mesh(&config.mesh, config.mesh.level)?;
    let [nx, nz] = demo.grid;
    let coord = |i: usize, n: usize| -demo.extent + 2.0 * demo.extent * i as f64 / (n - 1) as f64;
    let clearance = demo.clearance.max(0.1 * mesh.mesh_width());
    let grid: Vec<(Vec3, bool)> = (0..nz)
        .flat_map(|k| (0..nx).map(move |i| Vec3::new(coord(i, nx), 0.0, coord(k, nz))))
        .map(|x| (x, is_exterior(&mesh, x) && mesh.distance_to(x) >= clearance))
        .collect();
    let valid: Vec<Vec3> = grid.iter().filter(|g| g.1).map(|g| g.0).collect();
    let mut cfg = config.clone();
    cfg.evaluation.points = valid.iter().map(|p| p.to_array()).collect();
    let run = in_scenario(|| "torus demo".into(), run_single(&cfg))?;
    let wave = config.wave();
    let lowest = mesh.vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
    let first_arrival = wave.arrival_time(lowest, 1e-6);
    let mut peak_scattered = 0.0f64;
    let mut early_scattered = 0.0f64;
    for series in &run.fields.values {
        for (n, v) in series.iter().enumerate() {
            let e = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            peak_scattered = peak_scattered.max(e);
            if run.fields.times[n] < first_arrival {
                early_scattered = early_scattered.max(e);
            }
        }
    }
    let steps = run.fields.steps();
    let mut samples = Vec::new();
    for (f, &t) in demo.frames.iter().enumerate() {
        let n = ((t / run.tau).round() as usize).min(steps);
        let tn = run.fields.times[n];
        let mut slot = 0;
        for &(x, ok) in &grid {
            let (e, scattered) = if ok {
                let v = run.fields.values[slot][n];
                slot += 1;
                let inc = wave.electric(tn, x);
                let e = Vec3::new(v[0], v[1], v[2]);
                (e + inc, e.norm())
            } else {
                (Vec3::ZERO, 0.0)
            };
            samples.push(GridSample { frame: f, t: tn, x1: x.x, x3: x.z, valid: ok, e1: e.x, e2: e.y, e3: e.z, scattered_norm: scattered });
        }
    }
    Ok(TorusDemo { run, samples, peak_scattered, early_scattered, first_arrival })
}
