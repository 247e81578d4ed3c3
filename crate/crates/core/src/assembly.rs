//! Galerkin matrices of the boundary operators at one complex frequency.
//!
//! With real Raviart–Thomas basis functions `b_i`:
//!
//! * single layer `V_ij = −s ∬ G b_i·b_j − s⁻¹ ∬ G div b_i div b_j`
//! * double layer `K_ij = ∬ b_i(x)·(∇_x G(x−y) × b_j(y))`
//! * pairing `P_ij = ∫ (b_i × ν)·b_j`, mass `M_ij = ∫ b_i·b_j`,
//!   divergence mass `D_ij = ∫ div b_i div b_j`.
//!
//! Both `V` and `K` are symmetric. Panel pairs are visited once with the
//! test panel index not larger than the trial panel index and the mirrored
//! block is filled by symmetry, which also makes the assembled matrices
//! exactly symmetric regardless of the quadrature used.

use crate::geom::Vec3;
use crate::kernel::green_and_radial;
use crate::quadrature::{sauter_schwab, triangle_rule, PairKind, PairRule, TriangleRule};
use crate::trace_space::{Panel, RtSpace};
use crate::C64;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("frequency s = {0} must have positive real part")]
    NonPositiveFrequency(C64),
    #[error("invalid quadrature configuration: {0}")]
    InvalidQuadrature(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mass matrix factorization failed: {0}")]
    Factorization(String),
}

/// Quadrature orders for panel-pair integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Polynomial degree of the triangle rule for the farthest panel pairs.
    pub regular_order: usize,
    /// Gauss points per direction in each Sauter–Schwab variable.
    pub singular_order: usize,
    /// Pairs whose separation is below this multiple of the panel diameter
    /// get the highest-degree regular rule.
    pub near_threshold: f64,
    /// Target relative accuracy used to pick the rule for separated pairs.
    pub far_tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { regular_order: 4, singular_order: 4, near_threshold: 2.0, far_tolerance: 1e-9 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if self.regular_order < 1 || self.singular_order < 1 {
            return Err(AssemblyError::InvalidQuadrature("orders must be at least 1".into()));
        }
        if self.singular_order > 24 || self.regular_order > 40 {
            return Err(AssemblyError::InvalidQuadrature("quadrature orders are unreasonably large".into()));
        }
        if !(self.near_threshold >= 0.0 && self.near_threshold.is_finite()) {
            return Err(AssemblyError::InvalidQuadrature("near-field threshold must be non-negative".into()));
        }
        if !(self.far_tolerance > 0.0 && self.far_tolerance < 1.0) {
            return Err(AssemblyError::InvalidQuadrature("far-field tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    SingleLayer,
    DoubleLayer,
    Pairing,
    Mass,
    DivMass,
    Impedance,
}

/// A dense Galerkin matrix tagged with its operator and frequency.
#[derive(Debug, Clone)]
pub struct GalerkinMatrix {
    pub tag: OperatorTag,
    pub frequency: Option<C64>,
    pub matrix: Mat<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImpedanceKind {
    /// `Z(s) = δ s (·,·) + δ s⁻¹ (div ·, div ·)`
    ThinLayer,
    /// `Z(s) = δ s^{1/2} (·,·)`
    Absorbing,
}

impl ImpedanceKind {
    /// Coefficients `(α, β)` with `Z(s) = α M + β D`.
    pub fn coefficients(self, s: C64, delta: f64) -> (C64, C64) {
        match self {
            ImpedanceKind::ThinLayer => (s * delta, delta / s),
            ImpedanceKind::Absorbing => (s.sqrt() * delta, C64::new(0.0, 0.0)),
        }
    }
}

impl FromStr for ImpedanceKind {
    type Err = AssemblyError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match text.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "thinlayer" => Ok(ImpedanceKind::ThinLayer),
            "absorbing" => Ok(ImpedanceKind::Absorbing),
            _ => Err(AssemblyError::Domain(format!("unknown impedance kind {text:?}"))),
        }
    }
}

impl fmt::Display for ImpedanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImpedanceKind::ThinLayer => "thin-layer",
            ImpedanceKind::Absorbing => "absorbing",
        })
    }
}

fn check_frequency(s: C64) -> Result<(), AssemblyError> {
    if s.re > 0.0 && s.im.is_finite() {
        Ok(())
    } else {
        Err(AssemblyError::NonPositiveFrequency(s))
    }
}

// ---------------------------------------------------------------------------
// Frequency-independent sparse matrices

/// Mass, divergence-mass and pairing matrices of a space, with a cached
/// factorization of the mass matrix for L² projections.
pub struct SparseOperators {
    pub mass: SparseColMat<usize, f64>,
    pub div_mass: SparseColMat<usize, f64>,
    pub pairing: SparseColMat<usize, f64>,
    mass_llt: Llt<usize, f64>,
}

impl fmt::Debug for SparseOperators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseOperators").field("dofs", &self.mass.nrows()).finish_non_exhaustive()
    }
}

pub fn assemble_sparse_operators(space: &RtSpace) -> Result<SparseOperators, AssemblyError> {
    let n = space.dof_count();
    let rule = triangle_rule(2);
    let mut mass = Vec::with_capacity(9 * space.panels().len());
    let mut div = Vec::with_capacity(9 * space.panels().len());
    let mut pairing = Vec::with_capacity(9 * space.panels().len());
    for p in space.panels() {
        let mut m = [[0.0; 3]; 3];
        let mut q = [[0.0; 3]; 3];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = p.point(*bary);
            let b: [Vec3; 3] = std::array::from_fn(|k| p.basis(k, x));
            for i in 0..3 {
                let rotated = b[i].cross(p.normal);
                for j in 0..3 {
                    m[i][j] += w * p.area * b[i].dot(b[j]);
                    q[i][j] += w * p.area * rotated.dot(b[j]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let (r, c) = (p.dofs[i], p.dofs[j]);
                mass.push(Triplet::new(r, c, m[i][j]));
                div.push(Triplet::new(r, c, p.divergence(i) * p.divergence(j) * p.area));
                pairing.push(Triplet::new(r, c, q[i][j]));
            }
        }
    }
    let build = |t: &[Triplet<usize, usize, f64>]| {
        SparseColMat::try_new_from_triplets(n, n, t).map_err(|e| AssemblyError::Factorization(format!("{e:?}")))
    };
    let mass = build(&mass)?;
    let mass_llt = mass.sp_cholesky(Side::Lower).map_err(|e| AssemblyError::Factorization(format!("{e:?}")))?;
    Ok(SparseOperators { div_mass: build(&div)?, pairing: build(&pairing)?, mass, mass_llt })
}

impl SparseOperators {
    pub fn dof_count(&self) -> usize {
        self.mass.nrows()
    }

    /// Coefficients of the L² projection of a field with load vector
    /// `(b_i, f)`: solves `M c = load`.
    pub fn project(&self, load: &[C64]) -> Vec<C64> {
        let n = load.len();
        let rhs = Mat::<f64>::from_fn(n, 2, |i, j| if j == 0 { load[i].re } else { load[i].im });
        let x = faer::linalg::solvers::Solve::solve(&self.mass_llt, &rhs);
        (0..n).map(|i| C64::new(x[(i, 0)], x[(i, 1)])).collect()
    }
}

/// `y += alpha · A x` for a real sparse `A` and complex vectors.
pub fn sparse_apply(a: &SparseColMat<usize, f64>, alpha: C64, x: &[C64], y: &mut [C64]) {
    let a = a.as_ref();
    let col_ptr = a.col_ptr();
    let rows = a.row_idx();
    let vals = a.val();
    for (j, xj) in x.iter().enumerate() {
        let ax = alpha * xj;
        for k in col_ptr[j]..col_ptr[j + 1] {
            y[rows[k]] += ax * vals[k];
        }
    }
}

fn sparse_to_dense(a: &SparseColMat<usize, f64>, scale: C64) -> Mat<C64> {
    let n = a.nrows();
    let mut out = Mat::<C64>::zeros(n, a.ncols());
    let r = a.as_ref();
    for j in 0..a.ncols() {
        for k in r.col_ptr()[j]..r.col_ptr()[j + 1] {
            out[(r.row_idx()[k], j)] += scale * r.val()[k];
        }
    }
    out
}

pub fn assemble_pairing(space: &RtSpace) -> Result<GalerkinMatrix, AssemblyError> {
    let ops = assemble_sparse_operators(space)?;
    Ok(GalerkinMatrix { tag: OperatorTag::Pairing, frequency: None, matrix: sparse_to_dense(&ops.pairing, 1.0.into()) })
}

pub fn assemble_mass(space: &RtSpace) -> Result<GalerkinMatrix, AssemblyError> {
    let ops = assemble_sparse_operators(space)?;
    Ok(GalerkinMatrix { tag: OperatorTag::Mass, frequency: None, matrix: sparse_to_dense(&ops.mass, 1.0.into()) })
}

pub fn assemble_div_mass(space: &RtSpace) -> Result<GalerkinMatrix, AssemblyError> {
    let ops = assemble_sparse_operators(space)?;
    Ok(GalerkinMatrix { tag: OperatorTag::DivMass, frequency: None, matrix: sparse_to_dense(&ops.div_mass, 1.0.into()) })
}

/// Dense impedance form `Z(s)` of the given kind.
pub fn assemble_impedance(
    space: &RtSpace,
    s: C64,
    kind: ImpedanceKind,
    delta: f64,
) -> Result<GalerkinMatrix, AssemblyError> {
    check_frequency(s)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(AssemblyError::Domain(format!("impedance parameter must be positive, got {delta}")));
    }
    let ops = assemble_sparse_operators(space)?;
    let (alpha, beta) = kind.coefficients(s, delta);
    let mut matrix = sparse_to_dense(&ops.mass, alpha);
    if beta != C64::new(0.0, 0.0) {
        matrix += sparse_to_dense(&ops.div_mass, beta);
    }
    Ok(GalerkinMatrix { tag: OperatorTag::Impedance, frequency: Some(s), matrix })
}

// ---------------------------------------------------------------------------
// Panel-pair integration

fn physical_points(p: &Panel, rule: &TriangleRule) -> Vec<(Vec3, f64)> {
    rule.points.iter().zip(&rule.weights).map(|(l, w)| (p.point(*l), w * p.area)).collect()
}

/// Separation lower bound divided by the larger diameter.
fn separation_ratio(c1: Vec3, r1: f64, c2: Vec3, r2: f64) -> f64 {
    ((c1 - c2).norm() - r1 - r2) / (2.0 * r1.max(r2))
}

/// Kernel moments over a set of point pairs, in coordinates relative to an
/// origin `o`: enough to form every local V and K entry by algebra.
#[derive(Clone, Copy)]
struct Moments {
    g0: C64,
    gx: [C64; 3],
    gy: [C64; 3],
    gxy: C64,
    kxy: [C64; 3],
    kd: [C64; 3],
}

impl Moments {
    fn zero() -> Self {
        let z = C64::new(0.0, 0.0);
        Moments { g0: z, gx: [z; 3], gy: [z; 3], gxy: z, kxy: [z; 3], kd: [z; 3] }
    }

    #[inline(always)]
    fn add(&mut self, s: C64, x: Vec3, y: Vec3, w: f64) {
        let d = x - y;
        let (g, radial) = green_and_radial(s, d.norm());
        let gw = g * w;
        let kw = radial * w;
        let c = x.cross(y);
        self.g0 += gw;
        self.gxy += gw * x.dot(y);
        for k in 0..3 {
            self.gx[k] += gw * x[k];
            self.gy[k] += gw * y[k];
            self.kxy[k] += kw * c[k];
            self.kd[k] += kw * d[k];
        }
    }

    fn add_product(&mut self, s: C64, o: Vec3, xs: &[(Vec3, f64)], ys: &[(Vec3, f64)]) {
        let ys: Vec<(Vec3, f64)> = ys.iter().map(|(y, w)| (*y - o, *w)).collect();
        for (x, wx) in xs {
            let x = *x - o;
            for (y, wy) in &ys {
                self.add(s, x, *y, wx * wy);
            }
        }
    }
}

type Block = [[C64; 3]; 3];

/// Local 3×3 blocks of V and K for test panel `t` and trial panel `u`.
fn local_blocks(s: C64, m: &Moments, t: &Panel, u: &Panel, o: Vec3, with_k: bool) -> (Block, Block) {
    let inv_s = 1.0 / s;
    let dot3 = |a: &[C64; 3], v: Vec3| a[0] * v.x + a[1] * v.y + a[2] * v.z;
    let mut v = [[C64::new(0.0, 0.0); 3]; 3];
    let mut k = v;
    for a in 0..3 {
        let pa = t.vertices[a] - o;
        for b in 0..3 {
            let pb = u.vertices[b] - o;
            let c = t.coeffs[a] * u.coeffs[b];
            let phi_phi = m.gxy - dot3(&m.gx, pb) - dot3(&m.gy, pa) + m.g0 * pa.dot(pb);
            v[a][b] = (-s * phi_phi - inv_s * 4.0 * m.g0) * c;
            if with_k {
                k[a][b] = (dot3(&m.kxy, pb - pa) + dot3(&m.kd, pb.cross(pa))) * c;
            }
        }
    }
    (v, k)
}

/// Rules shared by all panel pairs of one assembly.
struct PairIntegrator {
    cfg: QuadratureConfig,
    /// (degree, rule) ladder for separated pairs, cheapest first
    far: Vec<(usize, TriangleRule)>,
    coincident: PairRule,
    edge: PairRule,
    vertex: PairRule,
    /// per ladder rung, per panel: physical points and weights
    far_points: Vec<Vec<Vec<(Vec3, f64)>>>,
}

impl PairIntegrator {
    fn new(space: &RtSpace, cfg: QuadratureConfig) -> Self {
        let mut degrees = vec![cfg.regular_order];
        degrees.extend([4, 5, 6, 8, 10, 12, 14].into_iter().filter(|&d| d > cfg.regular_order));
        let far: Vec<(usize, TriangleRule)> = degrees.into_iter().map(|d| (d, triangle_rule(d))).collect();
        let far_points = far
            .iter()
            .map(|(_, rule)| space.panels().iter().map(|p| physical_points(p, rule)).collect::<Vec<_>>())
            .collect();
        PairIntegrator {
            cfg,
            far,
            coincident: sauter_schwab(PairKind::Coincident, cfg.singular_order),
            edge: sauter_schwab(PairKind::CommonEdge, cfg.singular_order),
            vertex: sauter_schwab(PairKind::CommonVertex, cfg.singular_order),
            far_points,
        }
    }

    /// Cheapest rung, starting at `first`, whose error model meets the
    /// tolerance at this separation ratio; the last rung otherwise.
    fn rung(&self, ratio: f64, first: usize) -> usize {
        // measured relative block error of a degree-d rule at s = 2+3i
        // stays below c_d (1 / (2 + 2·ratio))^(d+1)
        let q = 1.0 / (2.0 + 2.0 * ratio.max(0.0));
        (first..self.far.len())
            .find(|&k| {
                let d = self.far[k].0;
                let c = if d < 6 { 0.2 } else { 0.03 };
                c * q.powi(d as i32 + 1) <= self.cfg.far_tolerance
            })
            .unwrap_or(self.far.len() - 1)
    }

    /// Rung used for a separated pair: graded from the regular order for
    /// pairs beyond the near-field threshold, from degree 8 below it.
    fn pair_rung(&self, ratio: f64) -> usize {
        if ratio >= self.cfg.near_threshold {
            self.rung(ratio, 0)
        } else {
            let first = self.far.iter().position(|(d, _)| *d >= 8).unwrap_or(self.far.len() - 1);
            self.rung(ratio, first)
        }
    }

    fn singular(&self, kind: PairKind) -> &PairRule {
        match kind {
            PairKind::Coincident => &self.coincident,
            PairKind::CommonEdge => &self.edge,
            PairKind::CommonVertex => &self.vertex,
        }
    }

    /// Moments of one panel pair.
    fn moments(&self, s: C64, space: &RtSpace, t: usize, u: usize, o: Vec3) -> Moments {
        let mesh = space.mesh();
        let (pt, pu) = (&space.panels()[t], &space.panels()[u]);
        let mut m = Moments::zero();
        if let Some((kind, perm_t, perm_u)) = classify(mesh.triangles()[t], mesh.triangles()[u], t == u) {
            let rule = self.singular(kind);
            let vt = perm_t.map(|k| pt.vertices[k] - o);
            let vu = perm_u.map(|k| pu.vertices[k] - o);
            let scale = pt.area * pu.area;
            for q in 0..rule.len() {
                let (lx, ly) = (rule.x[q], rule.y[q]);
                let x = vt[0] * lx[0] + vt[1] * lx[1] + vt[2] * lx[2];
                let y = vu[0] * ly[0] + vu[1] * ly[1] + vu[2] * ly[2];
                m.add(s, x, y, rule.weights[q] * scale);
            }
            return m;
        }
        let ratio = separation_ratio(pt.centroid, pt.radius, pu.centroid, pu.radius);
        let rung = self.pair_rung(ratio);
        m.add_product(s, o, &self.far_points[rung][t], &self.far_points[rung][u]);
        m
    }
}

/// Singular configuration of two mesh triangles together with vertex
/// orderings that put the shared entity first in both.
fn classify(t: [usize; 3], u: [usize; 3], same: bool) -> Option<(PairKind, [usize; 3], [usize; 3])> {
    if same {
        return Some((PairKind::Coincident, [0, 1, 2], [0, 1, 2]));
    }
    let mut shared = Vec::with_capacity(3);
    for (i, a) in t.iter().enumerate() {
        if let Some(j) = u.iter().position(|b| b == a) {
            shared.push((i, j));
        }
    }
    match shared.as_slice() {
        [] => None,
        [(i, j)] => Some((PairKind::CommonVertex, [*i, (i + 1) % 3, (i + 2) % 3], [*j, (j + 1) % 3, (j + 2) % 3])),
        [(i0, j0), (i1, j1)] => {
            let other = |a: usize, b: usize| 3 - a - b;
            Some((PairKind::CommonEdge, [*i0, *i1, other(*i0, *i1)], [*j0, *j1, other(*j0, *j1)]))
        }
        _ => Some((PairKind::Coincident, [0, 1, 2], [0, 1, 2])),
    }
}

/// Assemble the single- and double-layer matrices together (they share
/// all kernel evaluations).
pub fn assemble_layers(
    space: &RtSpace,
    s: C64,
    quad: &QuadratureConfig,
) -> Result<(GalerkinMatrix, GalerkinMatrix), AssemblyError> {
    assemble_impl(space, s, quad, true).map(|(v, k)| (v, k.expect("double layer requested")))
}

pub fn assemble_single_layer(space: &RtSpace, s: C64, quad: &QuadratureConfig) -> Result<GalerkinMatrix, AssemblyError> {
    assemble_impl(space, s, quad, false).map(|(v, _)| v)
}

pub fn assemble_double_layer(space: &RtSpace, s: C64, quad: &QuadratureConfig) -> Result<GalerkinMatrix, AssemblyError> {
    assemble_layers(space, s, quad).map(|(_, k)| k)
}

fn assemble_impl(
    space: &RtSpace,
    s: C64,
    quad: &QuadratureConfig,
    with_k: bool,
) -> Result<(GalerkinMatrix, Option<GalerkinMatrix>), AssemblyError> {
    check_frequency(s)?;
    quad.validate()?;
    let integrator = PairIntegrator::new(space, *quad);
    let n = space.dof_count();
    let panels = space.panels();
    let nt = panels.len();
    let mut v = Mat::<C64>::zeros(n, n);
    let mut k = if with_k { Some(Mat::<C64>::zeros(n, n)) } else { None };

    let batch = 16 * rayon::current_num_threads();
    let order: Vec<usize> = (0..nt).collect();
    for chunk in order.chunks(batch) {
        let blocks: Vec<Vec<(Block, Block)>> = chunk
            .par_iter()
            .map(|&t| {
                let o = panels[t].centroid;
                (t..nt)
                    .map(|u| {
                        let m = integrator.moments(s, space, t, u, o);
                        local_blocks(s, &m, &panels[t], &panels[u], o, with_k)
                    })
                    .collect()
            })
            .collect();
        for (&t, row) in chunk.iter().zip(&blocks) {
            let pt = &panels[t];
            for (offset, (bv, bk)) in row.iter().enumerate() {
                let u = t + offset;
                let pu = &panels[u];
                for a in 0..3 {
                    for b in 0..3 {
                        let (i, j) = (pt.dofs[a], pu.dofs[b]);
                        v[(i, j)] += bv[a][b];
                        if u != t {
                            v[(j, i)] += bv[a][b];
                        }
                        if let Some(k) = k.as_mut() {
                            k[(i, j)] += bk[a][b];
                            if u != t {
                                k[(j, i)] += bk[a][b];
                            }
                        }
                    }
                }
            }
        }
    }
    let v = GalerkinMatrix { tag: OperatorTag::SingleLayer, frequency: Some(s), matrix: v };
    let k = k.map(|matrix| GalerkinMatrix { tag: OperatorTag::DoubleLayer, frequency: Some(s), matrix });
    Ok((v, k))
}

/// Local V and K blocks of a single panel pair, as used by the assembly
/// (exposed for quadrature studies and oracle tests).
pub fn panel_pair_blocks(
    space: &RtSpace,
    s: C64,
    quad: &QuadratureConfig,
    t: usize,
    u: usize,
) -> Result<([[C64; 3]; 3], [[C64; 3]; 3]), AssemblyError> {
    check_frequency(s)?;
    quad.validate()?;
    let integrator = PairIntegrator::new(space, *quad);
    let o = space.panels()[t].centroid;
    let m = integrator.moments(s, space, t, u, o);
    Ok(local_blocks(s, &m, &space.panels()[t], &space.panels()[u], o, true))
}

/// Separation ratio of two panels as used for rule selection.
pub fn panel_separation_ratio(space: &RtSpace, t: usize, u: usize) -> f64 {
    let (a, b) = (&space.panels()[t], &space.panels()[u]);
    separation_ratio(a.centroid, a.radius, b.centroid, b.radius)
}
