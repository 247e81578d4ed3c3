//! Runge–Kutta convolution quadrature based on Radau IIA methods.
//!
//! A time series holds one stage vector per step: `gⁿ = (g(t_n + c_i τ))_i`
//! for `n = 0..=N`. Operators are applied frequency by frequency on the
//! scaled contour `ζ = ρ ζ_L^{−l}`, `l = 0..L−1`, `L = N + 1`, after
//! diagonalising `Δ(ζ)/τ`; the time sums are carried out by FFTs.

use crate::C64;
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CqError {
    #[error("Radau IIA with {0} stages is not supported (use 1, 2 or 3)")]
    UnsupportedStages(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("Δ(ζ) at contour index {l} is numerically defective (eigenvector condition {condition:e})")]
    Defective { l: usize, condition: f64 },
    #[error("series shape mismatch: {0}")]
    Shape(String),
    #[error("operator failed at contour index {l}, stage {stage}, s = {s}: {message}")]
    Frequency { l: usize, stage: usize, s: C64, message: String, residual: Option<f64> },
}

/// Failure reported by a per-frequency operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyFailure {
    pub message: String,
    pub residual: Option<f64>,
}

impl FrequencyFailure {
    pub fn new(message: impl Into<String>) -> Self {
        FrequencyFailure { message: message.into(), residual: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Stability function at infinity, `1 − bᵀ A⁻¹ 𝟙`.
    pub fn stability_at_infinity(&self) -> f64 {
        let m = self.stages();
        let a = Mat::<f64>::from_fn(m, m, |i, j| self.a[i][j]);
        let ones = Mat::<f64>::from_fn(m, 1, |_, _| 1.0);
        let x = a.partial_piv_lu().solve(&ones);
        1.0 - (0..m).map(|i| self.b[i] * x[(i, 0)]).sum::<f64>()
    }
}

pub fn radau_tableau(m: usize) -> Result<ButcherTableau, CqError> {
    let r6 = 6f64.sqrt();
    let t = match m {
        1 => ButcherTableau { a: vec![vec![1.0]], b: vec![1.0], c: vec![1.0] },
        2 => ButcherTableau {
            a: vec![vec![5.0 / 12.0, -1.0 / 12.0], vec![0.75, 0.25]],
            b: vec![0.75, 0.25],
            c: vec![1.0 / 3.0, 1.0],
        },
        3 => {
            let a = vec![
                vec![(88.0 - 7.0 * r6) / 360.0, (296.0 - 169.0 * r6) / 1800.0, (-2.0 + 3.0 * r6) / 225.0],
                vec![(296.0 + 169.0 * r6) / 1800.0, (88.0 + 7.0 * r6) / 360.0, (-2.0 - 3.0 * r6) / 225.0],
                vec![(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
            ];
            let b = a[2].clone();
            ButcherTableau { a, b, c: vec![(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0] }
        }
        _ => return Err(CqError::UnsupportedStages(m)),
    };
    Ok(t)
}

/// `Δ(ζ) = (A + ζ/(1−ζ) 𝟙 bᵀ)⁻¹` for `|ζ| < 1`.
pub fn delta(zeta: C64, tableau: &ButcherTableau) -> Result<Mat<C64>, CqError> {
    if !(zeta.norm() < 1.0) {
        return Err(CqError::Domain(format!("|ζ| = {} must be below 1", zeta.norm())));
    }
    let m = tableau.stages();
    let w = zeta / (1.0 - zeta);
    let mat = Mat::<C64>::from_fn(m, m, |i, j| C64::new(tableau.a[i][j], 0.0) + w * tableau.b[j]);
    Ok(mat.partial_piv_lu().inverse())
}

/// Eigendecomposition `Δ(ζ_l)/τ = P diag(s) P⁻¹` at one contour point.
#[derive(Debug, Clone)]
pub struct ContourPoint {
    pub zeta: C64,
    pub frequencies: Vec<C64>,
    pub vectors: Mat<C64>,
    pub inverse: Mat<C64>,
}

/// Whether the transform may exploit `ĝ_{L−l} = conj(ĝ_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Evaluate every contour point.
    Full,
    /// Real input and an operator with `K(s̄) = conj K(s)`: evaluate
    /// `l ≤ L/2` only and return a real series.
    Conjugate,
}

const DEFECTIVE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct CqContext {
    pub tableau: ButcherTableau,
    pub steps: usize,
    pub final_time: f64,
    pub tau: f64,
    pub rho: f64,
    pub points: Vec<ContourPoint>,
}

pub fn build_context(tableau: &ButcherTableau, steps: usize, final_time: f64) -> Result<CqContext, CqError> {
    if steps < 1 {
        return Err(CqError::Domain("at least one time step is required".into()));
    }
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(CqError::Domain(format!("final time must be positive, got {final_time}")));
    }
    let tau = final_time / steps as f64;
    let len = steps + 1;
    let rho = f64::EPSILON.powf(1.0 / (2.0 * steps as f64));
    let points = (0..len)
        .into_par_iter()
        .map(|l| {
            let zeta = C64::from_polar(rho, -2.0 * PI * l as f64 / len as f64);
            let d = delta(zeta, tableau)?;
            let eig = d.eigen().map_err(|e| CqError::Domain(format!("eigendecomposition failed: {e:?}")))?;
            let m = tableau.stages();
            let vectors = Mat::<C64>::from_fn(m, m, |i, j| eig.U()[(i, j)]);
            let frequencies: Vec<C64> = (0..m).map(|k| eig.S()[k] / tau).collect();
            let sv = vectors.singular_values().map_err(|e| CqError::Domain(format!("{e:?}")))?;
            let condition = sv.iter().cloned().fold(0.0, f64::max) / sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(condition <= DEFECTIVE_LIMIT) {
                return Err(CqError::Defective { l, condition });
            }
            let inverse = vectors.partial_piv_lu().inverse();
            Ok(ContourPoint { zeta, frequencies, vectors, inverse })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CqContext { tableau: tableau.clone(), steps, final_time, tau, rho, points })
}

impl CqContext {
    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    /// Transform length `L = N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Contour indices evaluated under the given symmetry.
    pub fn active_indices(&self, symmetry: Symmetry) -> std::ops::Range<usize> {
        match symmetry {
            Symmetry::Full => 0..self.len(),
            Symmetry::Conjugate => 0..self.len() / 2 + 1,
        }
    }

    /// Every frequency `s_{l,k}` in contour order.
    pub fn frequencies(&self) -> impl Iterator<Item = C64> + '_ {
        self.points.iter().flat_map(|p| p.frequencies.iter().copied())
    }

    pub fn min_real_frequency(&self) -> f64 {
        self.frequencies().map(|s| s.re).fold(f64::INFINITY, f64::min)
    }

    /// Stage times `t_n + c_i τ` for `n = 0..=N`.
    pub fn stage_times(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|n| self.tableau.c.iter().map(|c| (n as f64 + c) * self.tau).collect()).collect()
    }

    /// Sample a vector-valued function at the stage times.
    pub fn sample<F>(&self, dim: usize, f: F) -> StageSeries
    where
        F: Fn(f64) -> Vec<C64> + Sync,
    {
        let m = self.stages();
        let mut series = StageSeries::zeros(self.len(), m, dim);
        let times: Vec<f64> = self.stage_times().into_iter().flatten().collect();
        let values: Vec<Vec<C64>> = times.par_iter().map(|&t| f(t)).collect();
        for (k, v) in values.into_iter().enumerate() {
            assert_eq!(v.len(), dim, "sampled vector has the wrong length");
            series.stage_mut(k / m, k % m).copy_from_slice(&v);
        }
        series
    }
}

/// Stage vectors `xⁿ_i ∈ C^dim` for `n = 0..steps−1`, `i = 0..stages−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSeries {
    steps: usize,
    stages: usize,
    dim: usize,
    data: Vec<C64>,
}

impl StageSeries {
    pub fn zeros(steps: usize, stages: usize, dim: usize) -> Self {
        StageSeries { steps, stages, dim, data: vec![C64::new(0.0, 0.0); steps * stages * dim] }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stage(&self, n: usize, i: usize) -> &[C64] {
        let start = (n * self.stages + i) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn stage_mut(&mut self, n: usize, i: usize) -> &mut [C64] {
        let start = (n * self.stages + i) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// Approximation at `t_n`: the last stage of step `n − 1`, zero at `n = 0`.
    pub fn value_at(&self, n: usize) -> Vec<C64> {
        if n == 0 {
            vec![C64::new(0.0, 0.0); self.dim]
        } else {
            self.stage(n - 1, self.stages - 1).to_vec()
        }
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// Transformed data at one contour point: `w_k = Σ_i (P⁻¹)_{ki} ĝ_i` for
/// each eigenvalue `s_{l,k}`.
#[derive(Debug, Clone)]
pub struct ContourData {
    pub l: usize,
    pub frequencies: Vec<C64>,
    pub components: Vec<Vec<C64>>,
}

fn check_shape(ctx: &CqContext, input: &StageSeries) -> Result<(), CqError> {
    let (len, m) = (ctx.len(), ctx.stages());
    if input.steps != len || input.stages != m {
        return Err(CqError::Shape(format!(
            "expected {len} steps of {m} stages, got {} of {}",
            input.steps, input.stages
        )));
    }
    Ok(())
}

/// Scaled forward DFT along time followed by the change to the eigenbasis
/// of `Δ/τ`, at every contour index evaluated under `symmetry`.
pub fn contour_data(ctx: &CqContext, input: &StageSeries, symmetry: Symmetry) -> Result<Vec<ContourData>, CqError> {
    check_shape(ctx, input)?;
    let len = ctx.len();
    let m = ctx.stages();
    let dim = input.dim;
    let zero = C64::new(0.0, 0.0);
    let forward = FftPlanner::<f64>::new().plan_fft_forward(len);
    let width = m * dim;
    let mut spectrum = vec![zero; len * width];
    let mut column = vec![zero; len];
    for col in 0..width {
        let mut scale = 1.0;
        for (n, c) in column.iter_mut().enumerate() {
            *c = input.data[n * width + col] * scale;
            scale *= ctx.rho;
        }
        forward.process(&mut column);
        for (l, c) in column.iter().enumerate() {
            spectrum[l * width + col] = *c;
        }
    }
    Ok(ctx
        .active_indices(symmetry)
        .map(|l| {
            let point = &ctx.points[l];
            let g = &spectrum[l * width..(l + 1) * width];
            let components = (0..m)
                .map(|k| {
                    let mut w = vec![zero; dim];
                    for i in 0..m {
                        let p = point.inverse[(k, i)];
                        for (wc, gc) in w.iter_mut().zip(&g[i * dim..(i + 1) * dim]) {
                            *wc += p * gc;
                        }
                    }
                    w
                })
                .collect();
            ContourData { l, frequencies: point.frequencies.clone(), components }
        })
        .collect())
}

/// Generic contour transform: `op(l, k, s, x)` maps a vector of the input
/// space to the output space at frequency `s = s_{l,k}`.
pub fn cq_transform<F>(
    ctx: &CqContext,
    input: &StageSeries,
    out_dim: usize,
    symmetry: Symmetry,
    op: F,
) -> Result<StageSeries, CqError>
where
    F: Fn(usize, usize, C64, &[C64]) -> Result<Vec<C64>, FrequencyFailure> + Sync,
{
    cq_transform_checked(ctx, input, out_dim, symmetry, op).map(|(series, _)| series)
}

/// As [`cq_transform`], also returning the largest imaginary part discarded
/// under [`Symmetry::Conjugate`] (zero for [`Symmetry::Full`]).
pub fn cq_transform_checked<F>(
    ctx: &CqContext,
    input: &StageSeries,
    out_dim: usize,
    symmetry: Symmetry,
    op: F,
) -> Result<(StageSeries, f64), CqError>
where
    F: Fn(usize, usize, C64, &[C64]) -> Result<Vec<C64>, FrequencyFailure> + Sync,
{
    let data = contour_data(ctx, input, symmetry)?;
    let m = ctx.stages();
    let zero = C64::new(0.0, 0.0);
    let blocks: Vec<Vec<C64>> = data
        .par_iter()
        .map(|d| {
            let point = &ctx.points[d.l];
            let mut out = vec![zero; m * out_dim];
            for (k, w) in d.components.iter().enumerate() {
                let s = d.frequencies[k];
                let y = op(d.l, k, s, w).map_err(|f| CqError::Frequency {
                    l: d.l,
                    stage: k,
                    s,
                    message: f.message,
                    residual: f.residual,
                })?;
                if y.len() != out_dim {
                    return Err(CqError::Shape(format!("operator returned {} entries, expected {out_dim}", y.len())));
                }
                for i in 0..m {
                    let p = point.vectors[(i, k)];
                    for (oc, yc) in out[i * out_dim..(i + 1) * out_dim].iter_mut().zip(&y) {
                        *oc += p * yc;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_, CqError>>()?;
    let indices: Vec<usize> = data.iter().map(|d| d.l).collect();
    Ok(inverse_transform(ctx, &indices, &blocks, out_dim, symmetry))
}

fn inverse_transform(
    ctx: &CqContext,
    indices: &[usize],
    blocks: &[Vec<C64>],
    out_dim: usize,
    symmetry: Symmetry,
) -> (StageSeries, f64) {
    let len = ctx.len();
    let m = ctx.stages();
    let zero = C64::new(0.0, 0.0);
    let out_width = m * out_dim;
    let mut hat = vec![zero; len * out_width];
    for (&l, block) in indices.iter().zip(blocks) {
        hat[l * out_width..(l + 1) * out_width].copy_from_slice(block);
        if symmetry == Symmetry::Conjugate && l != 0 && 2 * l != len {
            for (dst, src) in hat[(len - l) * out_width..(len - l + 1) * out_width].iter_mut().zip(block) {
                *dst = src.conj();
            }
        }
    }
    let inverse = FftPlanner::<f64>::new().plan_fft_inverse(len);
    let mut column = vec![zero; len];
    let mut output = StageSeries::zeros(len, m, out_dim);
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for col in 0..out_width {
        for (l, c) in column.iter_mut().enumerate() {
            *c = hat[l * out_width + col];
        }
        inverse.process(&mut column);
        let mut scale = 1.0 / len as f64;
        for (n, c) in column.iter().enumerate() {
            let mut v = c * scale;
            if symmetry == Symmetry::Conjugate {
                max_re = max_re.max(v.re.abs());
                max_im = max_im.max(v.im.abs());
                v.im = 0.0;
            }
            output.data[n * out_width + col] = v;
            scale /= ctx.rho;
        }
    }
    let residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    (output, residue)
}

/// `K(∂_t) g` for a transfer operator given by its action at each frequency.
pub fn cq_apply<F>(
    ctx: &CqContext,
    input: &StageSeries,
    out_dim: usize,
    symmetry: Symmetry,
    transfer: F,
) -> Result<StageSeries, CqError>
where
    F: Fn(C64, &[C64]) -> Result<Vec<C64>, FrequencyFailure> + Sync,
{
    cq_transform(ctx, input, out_dim, symmetry, |_, _, s, x| transfer(s, x))
}

/// Solve `A(∂_t) u = g` given a solver for `A(s) x = b` at each frequency.
pub fn cq_solve<F>(ctx: &CqContext, rhs: &StageSeries, symmetry: Symmetry, solver: F) -> Result<StageSeries, CqError>
where
    F: Fn(C64, &[C64]) -> Result<Vec<C64>, FrequencyFailure> + Sync,
{
    let dim = rhs.dim;
    cq_transform(ctx, rhs, dim, symmetry, |_, _, s, b| {
        if b.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return Ok(vec![C64::new(0.0, 0.0); dim]);
        }
        solver(s, b)
    })
}

/// Scalar transfer function lifted to vectors.
pub fn scalar_transfer<K>(k: K) -> impl Fn(C64, &[C64]) -> Result<Vec<C64>, FrequencyFailure> + Sync
where
    K: Fn(C64) -> C64 + Sync,
{
    move |s, x| {
        let ks = k(s);
        Ok(x.iter().map(|v| ks * v).collect())
    }
}
