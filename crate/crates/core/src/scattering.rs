//! Scattering of a Gaussian plane wave: incident traces, the time-discrete
//! boundary integral equation and the representation formulas
//! `E = −S φ + D ψ`, `H = −D φ − S ψ`.

use crate::assembly::ImpedanceKind;
use crate::calderon::{solve_with, CalderonError, SolverConfig, SystemBuilder};
use crate::cq::{contour_data, cq_transform_checked, CqContext, CqError, FrequencyFailure, StageSeries, Symmetry};
use crate::geom::{CVec3, Vec3};
use crate::kernel::green_and_radial;
use crate::mesh::TriangleSurfaceMesh;
use crate::quadrature::{triangle_rule, TriangleRule};
use crate::trace_space::RtSpace;
use crate::C64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScatteringError {
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    Calderon(#[from] CalderonError),
    #[error("domain error: {0}")]
    Domain(String),
}

/// `E^inc = A e^{−a(t − x₃ − t₀)²} e₁`, `H^inc = A e^{−a(t − x₃ − t₀)²} e₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentWave {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
}

impl IncidentWave {
    pub fn gaussian(offset: f64) -> Self {
        IncidentWave { amplitude: 1.0, rate: 50.0, offset }
    }

    fn phase(&self, t: f64, x: Vec3) -> f64 {
        t - x.z - self.offset
    }

    fn profile(&self, u: f64) -> f64 {
        self.amplitude * (-self.rate * u * u).exp()
    }

    pub fn electric(&self, t: f64, x: Vec3) -> Vec3 {
        Vec3::new(self.profile(self.phase(t, x)), 0.0, 0.0)
    }

    pub fn magnetic(&self, t: f64, x: Vec3) -> Vec3 {
        Vec3::new(0.0, self.profile(self.phase(t, x)), 0.0)
    }

    /// `∂_t E^inc`, which equals `curl H^inc`.
    pub fn electric_rate(&self, t: f64, x: Vec3) -> Vec3 {
        let u = self.phase(t, x);
        Vec3::new(-2.0 * self.rate * u * self.profile(u), 0.0, 0.0)
    }

    /// First time at which the profile reaches `level · amplitude` at height `x₃`.
    pub fn arrival_time(&self, x3: f64, level: f64) -> f64 {
        x3 + self.offset - ((1.0 / level).ln() / self.rate).sqrt()
    }
}

/// Incident data at the stage times, stacked per stage as
/// `[(b_i, E^inc) | (b_i, H^inc × ν) | (div b_i, ν·E^inc)]`.
#[derive(Debug, Clone)]
pub struct IncidentTraces {
    pub dofs: usize,
    pub series: StageSeries,
}

impl IncidentTraces {
    fn block(&self, b: usize, n: usize, i: usize) -> &[C64] {
        &self.series.stage(n, i)[b * self.dofs..(b + 1) * self.dofs]
    }

    pub fn electric(&self, n: usize, i: usize) -> &[C64] {
        self.block(0, n, i)
    }

    pub fn magnetic(&self, n: usize, i: usize) -> &[C64] {
        self.block(1, n, i)
    }

    pub fn divergence(&self, n: usize, i: usize) -> &[C64] {
        self.block(2, n, i)
    }
}

const RHS_DEGREE: usize = 4;

pub fn incident_traces(wave: &IncidentWave, space: &RtSpace, ctx: &CqContext) -> IncidentTraces {
    let n = space.dof_count();
    let rule = triangle_rule(RHS_DEGREE);
    let series = ctx.sample(3 * n, |t| {
        let mut out = vec![C64::new(0.0, 0.0); 3 * n];
        if wave.amplitude == 0.0 {
            return out;
        }
        for p in space.panels() {
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let x = p.point(*bary);
                let scale = w * p.area;
                let e = wave.electric(t, x);
                let hn = wave.magnetic(t, x).cross(p.normal);
                let q = p.normal.dot(wave.electric_rate(t, x));
                for k in 0..3 {
                    let b = p.basis(k, x);
                    let dof = p.dofs[k];
                    out[dof] += C64::from(b.dot(e) * scale);
                    out[n + dof] += C64::from(b.dot(hn) * scale);
                    out[2 * n + dof] += C64::from(p.divergence(k) * q * scale);
                }
            }
        }
        out
    });
    IncidentTraces { dofs: n, series }
}

/// Right-hand side `(ĝ, 0)` at frequency `s` from transformed trace data:
/// `ĝ = −(ê + α(s) ĥ + β(s) s q̂)` where `q̂` carries `div_Γ(H × ν) = ν·curl H = s ν·E`
/// divided by `s`.
pub fn rhs_at(s: C64, kind: ImpedanceKind, delta: f64, data: &[C64]) -> Vec<C64> {
    let n = data.len() / 3;
    let (alpha, beta) = if delta == 0.0 { (C64::new(0.0, 0.0), C64::new(0.0, 0.0)) } else { kind.coefficients(s, delta) };
    let bs = beta * s;
    let mut rhs = vec![C64::new(0.0, 0.0); 2 * n];
    for i in 0..n {
        rhs[i] = -(data[i] + alpha * data[n + i] + bs * data[2 * n + i]);
    }
    rhs
}

/// Right-hand side at one contour frequency.
#[derive(Debug, Clone)]
pub struct FrequencyRhs {
    pub l: usize,
    pub stage: usize,
    pub frequency: C64,
    pub rhs: Vec<C64>,
}

pub fn build_rhs(
    ctx: &CqContext,
    traces: &IncidentTraces,
    kind: ImpedanceKind,
    delta: f64,
    symmetry: Symmetry,
) -> Result<Vec<FrequencyRhs>, ScatteringError> {
    let data = contour_data(ctx, &traces.series, symmetry)?;
    Ok(data
        .into_iter()
        .flat_map(|d| {
            let l = d.l;
            d.frequencies
                .into_iter()
                .zip(d.components)
                .enumerate()
                .map(move |(stage, (s, w))| FrequencyRhs { l, stage, frequency: s, rhs: rhs_at(s, kind, delta, &w) })
        })
        .collect())
}

/// Time series of the boundary densities `φ = γ_T H`, `ψ = −γ_T E`.
#[derive(Debug, Clone)]
pub struct BoundaryDensities {
    pub phi: StageSeries,
    pub psi: StageSeries,
    /// Largest imaginary part discarded by the real inverse transform,
    /// relative to the largest real part.
    pub imag_residue: f64,
    pub max_iterations: usize,
}

impl BoundaryDensities {
    /// `(φ, ψ)` stacked per stage, the input layout of [`evaluate_fields`].
    pub fn stacked(&self) -> StageSeries {
        let n = self.phi.dim();
        let mut out = StageSeries::zeros(self.phi.steps(), self.phi.stages(), 2 * n);
        for step in 0..self.phi.steps() {
            for i in 0..self.phi.stages() {
                let dst = out.stage_mut(step, i);
                dst[..n].copy_from_slice(self.phi.stage(step, i));
                dst[n..].copy_from_slice(self.psi.stage(step, i));
            }
        }
        out
    }

    /// `‖φ(t_n)‖ + ‖ψ(t_n)‖` in the Euclidean coefficient norm.
    pub fn norm_at(&self, n: usize) -> f64 {
        let norm = |v: Vec<C64>| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        norm(self.phi.value_at(n)) + norm(self.psi.value_at(n))
    }
}

/// Impedance setting of one density solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impedance {
    pub kind: ImpedanceKind,
    pub delta: f64,
}

pub fn solve_densities(
    builder: &SystemBuilder,
    ctx: &CqContext,
    traces: &IncidentTraces,
    impedance: Impedance,
    solver: &SolverConfig,
) -> Result<BoundaryDensities, ScatteringError> {
    Ok(solve_densities_multi(builder, ctx, traces, &[impedance], solver)?.remove(0))
}

/// Densities for several impedance settings, sharing the layer assembly at
/// every frequency.
pub fn solve_densities_multi(
    builder: &SystemBuilder,
    ctx: &CqContext,
    traces: &IncidentTraces,
    settings: &[Impedance],
    solver: &SolverConfig,
) -> Result<Vec<BoundaryDensities>, ScatteringError> {
    let n = builder.space().dof_count();
    if traces.dofs != n {
        return Err(ScatteringError::Domain(format!("traces have {} DOFs, space has {n}", traces.dofs)));
    }
    for imp in settings {
        if !(imp.delta > 0.0 && imp.delta.is_finite()) {
            return Err(ScatteringError::Domain(format!("δ must be positive, got {}", imp.delta)));
        }
    }
    let width = 2 * n;
    let iterations = AtomicUsize::new(0);
    let (out, residue) = cq_transform_checked(ctx, &traces.series, width * settings.len(), Symmetry::Conjugate, |_, _, s, w| {
        let zero = C64::new(0.0, 0.0);
        let mut out = vec![zero; width * settings.len()];
        if w.iter().all(|z| *z == zero) {
            return Ok(out);
        }
        let (v, k) = builder.layers(s).map_err(failure)?;
        for (c, imp) in settings.iter().enumerate() {
            let rhs = rhs_at(s, imp.kind, imp.delta, w);
            let system = builder.build_from_layers(v.clone(), &k, imp.kind, imp.delta).map_err(failure)?;
            let sol = solve_with(&system, &rhs, solver).map_err(failure)?;
            iterations.fetch_max(sol.iterations, Ordering::Relaxed);
            out[c * width..(c + 1) * width].copy_from_slice(&sol.x);
        }
        Ok(out)
    })?;
    let max_iterations = iterations.into_inner();
    Ok((0..settings.len())
        .map(|c| {
            let mut phi = StageSeries::zeros(out.steps(), out.stages(), n);
            let mut psi = phi.clone();
            for step in 0..out.steps() {
                for i in 0..out.stages() {
                    let src = &out.stage(step, i)[c * width..(c + 1) * width];
                    phi.stage_mut(step, i).copy_from_slice(&src[..n]);
                    psi.stage_mut(step, i).copy_from_slice(&src[n..]);
                }
            }
            BoundaryDensities { phi, psi, imag_residue: residue, max_iterations }
        })
        .collect())
}

fn failure(e: CalderonError) -> FrequencyFailure {
    let residual = match e {
        CalderonError::NotConverged { residual, .. } => Some(residual),
        _ => None,
    };
    FrequencyFailure { message: e.to_string(), residual }
}

/// Field time series at exterior points.
#[derive(Debug, Clone)]
pub struct FieldObservation {
    pub points: Vec<Vec3>,
    pub distances: Vec<f64>,
    /// Per stage: `E` at every point, then `H` at every point.
    pub fields: StageSeries,
    pub imag_residue: f64,
}

impl FieldObservation {
    /// `(E, H)` at point `p` and time `t_n`.
    pub fn at(&self, n: usize, p: usize) -> (Vec3, Vec3) {
        let v = self.fields.value_at(n);
        let np = self.points.len();
        let e = Vec3::new(v[3 * p].re, v[3 * p + 1].re, v[3 * p + 2].re);
        let h = Vec3::new(v[3 * (np + p)].re, v[3 * (np + p) + 1].re, v[3 * (np + p) + 2].re);
        (e, h)
    }

    /// Number of output times `t_0 .. t_N`.
    pub fn times(&self) -> usize {
        self.fields.steps()
    }
}

/// Smallest distance to Γ accepted by the field evaluation, in units of the
/// mesh width.
pub const MIN_CLEARANCE: f64 = 0.1;

/// Per-panel rule for a point at `ratio` panel radii from the centroid.
fn potential_rule(ratio: f64, rules: &[TriangleRule; 4]) -> &TriangleRule {
    if ratio >= 10.0 {
        &rules[0]
    } else if ratio >= 4.0 {
        &rules[1]
    } else if ratio >= 2.0 {
        &rules[2]
    } else {
        &rules[3]
    }
}

fn potential_rules() -> [TriangleRule; 4] {
    [triangle_rule(6), triangle_rule(10), triangle_rule(14), triangle_rule(24)]
}

/// `(S(s)φ, D(s)φ, S(s)ψ, D(s)ψ)` at `x` for coefficient vectors `φ`, `ψ`.
fn potentials(space: &RtSpace, rules: &[TriangleRule; 4], s: C64, phi: &[C64], psi: &[C64], x: Vec3) -> [CVec3; 4] {
    let mut acc = [CVec3::ZERO; 4];
    let inv_s = 1.0 / s;
    for p in space.panels() {
        let rule = potential_rule((x - p.centroid).norm() / p.radius, rules);
        let cf: [C64; 3] = std::array::from_fn(|k| phi[p.dofs[k]]);
        let cp: [C64; 3] = std::array::from_fn(|k| psi[p.dofs[k]]);
        let div_f: C64 = (0..3).map(|k| cf[k] * p.divergence(k)).sum();
        let div_p: C64 = (0..3).map(|k| cp[k] * p.divergence(k)).sum();
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let y = p.point(*bary);
            let r = x - y;
            let (g, radial) = green_and_radial(s, r.norm());
            let weight = w * p.area;
            let mut vf = CVec3::ZERO;
            let mut vp = CVec3::ZERO;
            for k in 0..3 {
                let b = p.basis(k, y);
                vf += CVec3::from_real(b, cf[k]);
                vp += CVec3::from_real(b, cp[k]);
            }
            let gw = -s * g * weight;
            let rw = radial * weight;
            acc[0] += vf * gw + CVec3::from_real(r, rw * inv_s * div_f);
            acc[2] += vp * gw + CVec3::from_real(r, rw * inv_s * div_p);
            // ∇_x G × φ = radial (x − y) × φ
            acc[1] += -(vf.cross_real(r) * rw);
            acc[3] += -(vp.cross_real(r) * rw);
        }
    }
    acc
}

/// Laplace-domain fields `(E, H)` of the representation formulas at `points`.
pub fn represent(space: &RtSpace, s: C64, phi: &[C64], psi: &[C64], points: &[Vec3]) -> Vec<(CVec3, CVec3)> {
    let rules = potential_rules();
    points
        .iter()
        .map(|&x| {
            let [sf, df, sp, dp] = potentials(space, &rules, s, phi, psi, x);
            (-sf + dp, -df - sp)
        })
        .collect()
}

fn check_points(mesh: &TriangleSurfaceMesh, points: &[Vec3]) -> Result<Vec<f64>, ScatteringError> {
    let clearance = MIN_CLEARANCE * mesh.mesh_width();
    points
        .iter()
        .map(|&x| {
            let d = mesh.distance_to(x);
            if !x.is_finite() || d < clearance {
                Err(ScatteringError::Domain(format!(
                    "evaluation point {x:?} is {d:.3e} from the surface (minimum {clearance:.3e})"
                )))
            } else {
                Ok(d)
            }
        })
        .collect()
}

pub fn evaluate_fields(
    space: &RtSpace,
    ctx: &CqContext,
    densities: &BoundaryDensities,
    points: &[Vec3],
) -> Result<FieldObservation, ScatteringError> {
    let distances = check_points(space.mesh(), points)?;
    let n = space.dof_count();
    if densities.phi.dim() != n {
        return Err(ScatteringError::Domain(format!("densities have {} DOFs, space has {n}", densities.phi.dim())));
    }
    let rules = potential_rules();
    let np = points.len();
    let (fields, imag_residue) = cq_transform_checked(ctx, &densities.stacked(), 6 * np, Symmetry::Conjugate, |_, _, s, x| {
        let zero = C64::new(0.0, 0.0);
        let mut out = vec![zero; 6 * np];
        if x.iter().all(|z| *z == zero) {
            return Ok(out);
        }
        let (phi, psi) = x.split_at(n);
        let values: Vec<[CVec3; 4]> = points.par_iter().map(|&p| potentials(space, &rules, s, phi, psi, p)).collect();
        for (j, [sf, df, sp, dp]) in values.into_iter().enumerate() {
            let e = -sf + dp;
            let h = -df - sp;
            out[3 * j..3 * j + 3].copy_from_slice(&e.0);
            out[3 * (np + j)..3 * (np + j) + 3].copy_from_slice(&h.0);
        }
        Ok(out)
    })?;
    Ok(FieldObservation { points: points.to_vec(), distances, fields, imag_residue })
}

/// Winding number of a closed, outward oriented surface about `x`: one
/// inside, zero outside.
pub fn winding_number(mesh: &TriangleSurfaceMesh, x: Vec3) -> f64 {
    let total: f64 = (0..mesh.num_triangles())
        .map(|t| {
            let [a, b, c] = mesh.triangle_vertices(t).map(|v| v - x);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(b.cross(c));
            let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
            2.0 * num.atan2(den)
        })
        .sum();
    total / (4.0 * PI)
}

pub fn is_exterior(mesh: &TriangleSurfaceMesh, x: Vec3) -> bool {
    winding_number(mesh, x).abs() < 0.5
}
