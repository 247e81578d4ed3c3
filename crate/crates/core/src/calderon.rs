//! The 2×2 block system `A(s)` per frequency and its solvers.
//!
//! Unknowns are the coefficient vectors of `(φ, ψ)`; with the single layer
//! `V`, double layer `K`, pairing `P` and impedance form `Z`:
//!
//! ```text
//! A(s) = [ −V + Z    K − ½P ]
//!        [ −K − ½P   −V     ]
//! ```

use crate::assembly::{
    assemble_layers, assemble_sparse_operators, AssemblyError, GalerkinMatrix, ImpedanceKind, QuadratureConfig,
    SparseOperators,
};
use crate::geom::{CVec3, Vec3};
use crate::kernel::green_and_radial;
use crate::trace_space::RtSpace;
use crate::C64;
use faer::linalg::solvers::Solve;
use faer::sparse::SparseColMat;
use faer::{ColRef, Mat};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalderonError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("GMRES did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
}

/// Linear solver used for the per-frequency systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Direct,
    Gmres,
}

impl std::str::FromStr for SolverKind {
    type Err = CalderonError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match text.trim().to_ascii_lowercase().as_str() {
            "direct" | "lu" => Ok(SolverKind::Direct),
            "gmres" => Ok(SolverKind::Gmres),
            _ => Err(CalderonError::Domain(format!("unknown solver {text:?}"))),
        }
    }
}

/// Solver settings shared by all frequencies of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { kind: SolverKind::Direct, tolerance: 1e-8, max_iterations: 1000 }
    }
}

/// Assembled block operator at one frequency.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub frequency: C64,
    pub kind: ImpedanceKind,
    pub delta: f64,
    n: usize,
    matrix: Mat<C64>,
    single_layer: Arc<GalerkinMatrix>,
}

impl BlockSystem {
    /// Number of degrees of freedom per unknown; the system has twice as many.
    pub fn dof_count(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    /// The single-layer matrix; block (1, 1) is its negative.
    pub fn single_layer(&self) -> &Arc<GalerkinMatrix> {
        &self.single_layer
    }

    /// Copy of block `(row, col)` with indices in {0, 1}.
    pub fn block(&self, row: usize, col: usize) -> Mat<C64> {
        let n = self.n;
        self.matrix.submatrix(row * n, col * n, n, n).to_owned()
    }

    /// The system at the conjugate frequency.
    pub fn conj(&self) -> BlockSystem {
        let v = &self.single_layer;
        BlockSystem {
            frequency: self.frequency.conj(),
            kind: self.kind,
            delta: self.delta,
            n: self.n,
            matrix: self.matrix.conjugate().to_owned(),
            single_layer: Arc::new(GalerkinMatrix {
                tag: v.tag,
                frequency: v.frequency.map(|s| s.conj()),
                matrix: v.matrix.conjugate().to_owned(),
            }),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let y = &self.matrix * ColRef::from_slice(x);
        (0..y.nrows()).map(|i| y[i]).collect()
    }
}

/// Builds block systems for one space, caching the frequency-independent
/// sparse matrices.
#[derive(Debug, Clone)]
pub struct SystemBuilder {
    space: Arc<RtSpace>,
    ops: Arc<SparseOperators>,
    quad: QuadratureConfig,
}

impl SystemBuilder {
    pub fn new(space: Arc<RtSpace>, quad: QuadratureConfig) -> Result<Self, CalderonError> {
        quad.validate()?;
        let ops = Arc::new(assemble_sparse_operators(&space)?);
        Ok(SystemBuilder { space, ops, quad })
    }

    pub fn space(&self) -> &Arc<RtSpace> {
        &self.space
    }

    pub fn operators(&self) -> &Arc<SparseOperators> {
        &self.ops
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn build(&self, s: C64, kind: ImpedanceKind, delta: f64) -> Result<BlockSystem, CalderonError> {
        check_delta(delta)?;
        let (v, k) = assemble_layers(&self.space, s, &self.quad)?;
        self.build_from_layers(Arc::new(v), &k, kind, delta)
    }

    /// Assemble `V(s)` and `K(s)` once for several impedance settings.
    pub fn layers(&self, s: C64) -> Result<(Arc<GalerkinMatrix>, GalerkinMatrix), CalderonError> {
        let (v, k) = assemble_layers(&self.space, s, &self.quad)?;
        Ok((Arc::new(v), k))
    }

    /// Block system from precomputed layer matrices at their common frequency.
    pub fn build_from_layers(
        &self,
        v: Arc<GalerkinMatrix>,
        k: &GalerkinMatrix,
        kind: ImpedanceKind,
        delta: f64,
    ) -> Result<BlockSystem, CalderonError> {
        check_delta(delta)?;
        let s = match (v.frequency, k.frequency) {
            (Some(a), Some(b)) if a == b => a,
            _ => return Err(CalderonError::Domain("layer matrices must share one frequency".into())),
        };
        let n = self.space.dof_count();
        if v.matrix.nrows() != n || k.matrix.nrows() != n {
            return Err(CalderonError::Domain("layer matrices do not match the space".into()));
        }
        let mut a = Mat::<C64>::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let (vij, kij) = (v.matrix[(i, j)], k.matrix[(i, j)]);
                a[(i, j)] = -vij;
                a[(i, j + n)] = kij;
                a[(i + n, j)] = -kij;
                a[(i + n, j + n)] = -vij;
            }
        }
        for_each_entry(&self.ops.pairing, |i, j, p| {
            a[(i, j + n)] -= 0.5 * p;
            a[(i + n, j)] -= 0.5 * p;
        });
        let (alpha, beta) = kind.coefficients(s, delta);
        for_each_entry(&self.ops.mass, |i, j, m| a[(i, j)] += alpha * m);
        if beta != C64::new(0.0, 0.0) {
            for_each_entry(&self.ops.div_mass, |i, j, d| a[(i, j)] += beta * d);
        }
        Ok(BlockSystem { frequency: s, kind, delta, n, matrix: a, single_layer: v })
    }
}

fn check_delta(delta: f64) -> Result<(), CalderonError> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(CalderonError::Domain(format!("impedance parameter must be non-negative, got {delta}")))
    }
}

fn for_each_entry(a: &SparseColMat<usize, f64>, mut f: impl FnMut(usize, usize, f64)) {
    let a = a.as_ref();
    for j in 0..a.ncols() {
        for k in a.col_ptr()[j]..a.col_ptr()[j + 1] {
            f(a.row_idx()[k], j, a.val()[k]);
        }
    }
}

pub fn build_system(
    space: &Arc<RtSpace>,
    s: C64,
    kind: ImpedanceKind,
    delta: f64,
    quad: &QuadratureConfig,
) -> Result<BlockSystem, CalderonError> {
    SystemBuilder::new(space.clone(), *quad)?.build(s, kind, delta)
}

/// Outcome of a linear solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
}

fn check_rhs(system: &BlockSystem, rhs: &[C64]) -> Result<(), CalderonError> {
    if rhs.len() != 2 * system.n {
        return Err(CalderonError::Domain(format!("rhs has length {}, expected {}", rhs.len(), 2 * system.n)));
    }
    if rhs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CalderonError::Domain("rhs contains non-finite entries".into()));
    }
    Ok(())
}

fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Full (unrestarted) GMRES from a zero initial guess.
pub fn solve(system: &BlockSystem, rhs: &[C64], tol: f64, max_iter: usize) -> Result<Solution, CalderonError> {
    check_rhs(system, rhs)?;
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(CalderonError::Domain(format!("tolerance {tol} outside (0, 1e-2]")));
    }
    gmres(|x| system.apply(x), rhs, tol, max_iter)
}

/// Full GMRES for a generic operator.
pub fn gmres<F>(apply: F, b: &[C64], tol: f64, max_iter: usize) -> Result<Solution, CalderonError>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let beta = vec_norm(b);
    if beta == 0.0 {
        return Ok(Solution { x: vec![zero; n], iterations: 0, residual: 0.0 });
    }
    let mut basis: Vec<Vec<C64>> = vec![b.iter().map(|z| z / beta).collect()];
    // Hessenberg columns after rotation, rotations, rotated rhs
    let mut h: Vec<Vec<C64>> = Vec::new();
    let mut rotations: Vec<(f64, C64)> = Vec::new();
    let mut g = vec![C64::new(beta, 0.0)];
    let mut residual = 1.0;
    let mut k = 0;
    while k < max_iter.min(n) {
        let mut w = apply(&basis[k]);
        let mut col = Vec::with_capacity(k + 2);
        // modified Gram–Schmidt, repeated once for stability
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let c: C64 = q.iter().zip(&w).map(|(qi, wi)| qi.conj() * wi).sum();
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
                if col.len() <= j {
                    col.push(c);
                } else {
                    col[j] += c;
                }
            }
        }
        let norm = vec_norm(&w);
        col.push(C64::new(norm, 0.0));
        for (j, &(c, s)) in rotations.iter().enumerate() {
            let (a, b) = (col[j], col[j + 1]);
            col[j] = a * c + s * b;
            col[j + 1] = -s.conj() * a + b * c;
        }
        let (a, b) = (col[k], col[k + 1]);
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (c, s) = if a.norm() == 0.0 {
            (0.0, C64::new(1.0, 0.0))
        } else {
            let phase = a / a.norm();
            (a.norm() / r, phase * b.conj() / r)
        };
        col[k] = a * c + s * b;
        col[k + 1] = zero;
        rotations.push((c, s));
        let gk = g[k];
        g[k] = gk * c;
        g.push(-s.conj() * gk);
        h.push(col);
        k += 1;
        residual = g[k].norm() / beta;
        if residual <= tol || norm == 0.0 {
            break;
        }
        basis.push(w.iter().map(|z| z / norm).collect());
    }
    // back substitution on the triangular factor
    let mut y = vec![zero; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        y[i] = acc / h[i][i];
    }
    let mut x = vec![zero; n];
    for (yj, q) in y.iter().zip(&basis) {
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi += yj * qi;
        }
    }
    if residual > tol {
        return Err(CalderonError::NotConverged { iterations: k, residual });
    }
    Ok(Solution { x, iterations: k, residual })
}

/// Dense LU solve with partial pivoting.
pub fn solve_direct(system: &BlockSystem, rhs: &[C64]) -> Result<Solution, CalderonError> {
    check_rhs(system, rhs)?;
    let lu = system.matrix.partial_piv_lu();
    let b = Mat::<C64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let x: Vec<C64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CalderonError::Decomposition("singular system".into()));
    }
    let ax = system.apply(&x);
    let norm_b = vec_norm(rhs);
    let residual = if norm_b == 0.0 {
        0.0
    } else {
        vec_norm(&ax.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm_b
    };
    Ok(Solution { x, iterations: 0, residual })
}

pub fn solve_with(system: &BlockSystem, rhs: &[C64], config: &SolverConfig) -> Result<Solution, CalderonError> {
    match config.kind {
        SolverKind::Direct => solve_direct(system, rhs),
        SolverKind::Gmres => solve(system, rhs, config.tolerance, config.max_iterations),
    }
}

/// Spectral quantities of a system matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub condition: f64,
    pub norm: f64,
    pub inverse_norm: f64,
}

/// Largest number of DOFs per unknown accepted by [`condition_report`].
pub const MAX_CONDITION_DOFS: usize = 3000;

pub fn condition_report(system: &BlockSystem) -> Result<ConditionReport, CalderonError> {
    if system.n > MAX_CONDITION_DOFS {
        return Err(CalderonError::ResourceLimit(format!(
            "dense SVD limited to {MAX_CONDITION_DOFS} DOFs, system has {}",
            system.n
        )));
    }
    matrix_condition(&system.matrix)
}

pub fn matrix_condition(a: &Mat<C64>) -> Result<ConditionReport, CalderonError> {
    let sv = a.singular_values().map_err(|e| CalderonError::Decomposition(format!("{e:?}")))?;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConditionReport { condition: max / min, norm: max, inverse_norm: 1.0 / min })
}

// ---------------------------------------------------------------------------
// Point-dipole fields and the Calderón residual

/// Laplace-domain fields of an electric point dipole with moment `p` at `x0`,
/// solutions of `sE − curl H = 0`, `sH + curl E = 0` away from `x0`:
/// `H = ∇G × p`, `E = s⁻¹ (∇∇ᵀG − s² G) p`.
pub fn dipole_fields(s: C64, x0: Vec3, p: Vec3, x: Vec3) -> (CVec3, CVec3) {
    let r = x - x0;
    let d = r.norm();
    let (g, radial) = green_and_radial(s, d);
    let h = CVec3::from_real(r.cross(p), radial);
    let u = r / d;
    // Hessian = a r̂r̂ᵀ + b I
    let b = radial;
    let a = g * (s * s * d * d + 3.0 * s * d + 3.0) / (d * d);
    let up = u.dot(p);
    let e = (CVec3::from_real(u, a * up) + CVec3::from_real(p, b - s * s * g)) * (1.0 / s);
    (e, h)
}

/// Residuals of the Calderón identity for the exterior fields of a dipole
/// inside the surface: `C(s)(γ_T H, −γ_T E) − ½ (γ_T E, γ_T H)` in the
/// discrete L² norm, together with the norm of the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalderonResidual {
    pub residual: f64,
    pub reference: f64,
}

impl CalderonResidual {
    pub fn relative(&self) -> f64 {
        self.residual / self.reference
    }
}

pub fn calderon_residual(
    space: &RtSpace,
    s: C64,
    x0: Vec3,
    p: Vec3,
    quad: &QuadratureConfig,
) -> Result<CalderonResidual, CalderonError> {
    let ops = assemble_sparse_operators(space)?;
    let (v, k) = assemble_layers(space, s, quad)?;
    let degree = 6;
    // (b_i, w) for w = E and w = H; tangential parts are implied
    let load_e = space.l2_functional(degree, |x, _| dipole_fields(s, x0, p, x).0);
    let load_h = space.l2_functional(degree, |x, _| dipole_fields(s, x0, p, x).1);
    // canonical interpolants of γ_T H and −γ_T E, with γ_T w = w × ν
    let phi = space.interpolate(|x, n| dipole_fields(s, x0, p, x).1.cross_real(n));
    let psi = space.interpolate(|x, n| -dipole_fields(s, x0, p, x).0.cross_real(n));
    let n = space.dof_count();
    let apply = |m: &Mat<C64>, x: &[C64]| {
        let y = m * ColRef::from_slice(x);
        (0..n).map(|i| y[i]).collect::<Vec<C64>>()
    };
    let (v_phi, v_psi, k_phi, k_psi) = (apply(&v.matrix, &phi), apply(&v.matrix, &psi), apply(&k.matrix, &phi), apply(&k.matrix, &psi));
    let r1: Vec<C64> = (0..n).map(|i| -v_phi[i] + k_psi[i] - 0.5 * load_e[i]).collect();
    let r2: Vec<C64> = (0..n).map(|i| -k_phi[i] - v_psi[i] - 0.5 * load_h[i]).collect();
    let dual_norm = |r: &[C64]| {
        let m_inv_r = ops.project(r);
        r.iter().zip(&m_inv_r).map(|(a, b)| a.conj() * b).sum::<C64>().re.max(0.0)
    };
    let residual = (dual_norm(&r1) + dual_norm(&r2)).sqrt();
    let half_e: Vec<C64> = load_e.iter().map(|z| 0.5 * z).collect();
    let half_h: Vec<C64> = load_h.iter().map(|z| 0.5 * z).collect();
    let reference = (dual_norm(&half_e) + dual_norm(&half_h)).sqrt();
    Ok(CalderonResidual { residual, reference })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(level: u32) -> Arc<RtSpace> {
        Arc::new(RtSpace::new(Arc::new(generate_icosphere(level, 1.0).unwrap()), 0).unwrap())
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    fn max_abs(m: &Mat<C64>) -> f64 {
        let mut out: f64 = 0.0;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out = out.max(m[(i, j)].norm());
            }
        }
        out
    }

    fn form(system: &BlockSystem, x: &[C64]) -> C64 {
        system.apply(x).iter().zip(x).map(|(ax, xi)| xi.conj() * ax).sum()
    }

    #[test]
    fn blocks_follow_the_definition() {
        let space = sphere(0);
        let quad = QuadratureConfig::default();
        let s = C64::new(1.0, 2.0);
        let builder = SystemBuilder::new(space.clone(), quad).unwrap();
        let tiny = builder.build(s, ImpedanceKind::ThinLayer, 1e-12).unwrap();
        let v = &tiny.single_layer().matrix;
        let a11 = tiny.block(0, 0);
        assert!(max_abs(&(&a11 + v)) <= 1e-9 * max_abs(v));
        assert_eq!(max_abs(&(&tiny.block(1, 1) + v)), 0.0);

        let system = builder.build(s, ImpedanceKind::Absorbing, 0.3).unwrap();
        let (v, k) = assemble_layers(&space, s, &quad).unwrap();
        let p = crate::assembly::assemble_pairing(&space).unwrap().matrix;
        let z = crate::assembly::assemble_impedance(&space, s, ImpedanceKind::Absorbing, 0.3).unwrap().matrix;
        let half_p = &p * faer::Scale(C64::new(0.5, 0.0));
        let expected = [
            [&z - &v.matrix, &k.matrix - &half_p],
            [-&k.matrix - &half_p, -&v.matrix],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, block) in row.iter().enumerate() {
                assert!(max_abs(&(&system.block(r, c) - block)) <= 1e-14 * max_abs(&v.matrix));
            }
        }
    }

    #[test]
    fn conjugate_frequency_gives_conjugate_system() {
        let space = sphere(0);
        let builder = SystemBuilder::new(space, QuadratureConfig::default()).unwrap();
        for kind in [ImpedanceKind::ThinLayer, ImpedanceKind::Absorbing] {
            let a = builder.build(C64::new(0.7, 3.0), kind, 0.5).unwrap();
            let b = builder.build(C64::new(0.7, -3.0), kind, 0.5).unwrap();
            let diff = &a.conj().matrix - &b.matrix;
            assert!(max_abs(&diff) <= 1e-12 * max_abs(&a.matrix));
            assert_eq!(a.conj().frequency, b.frequency);
        }
    }

    #[test]
    fn random_quadratic_forms_are_positive() {
        let space = sphere(0);
        let builder = SystemBuilder::new(space, QuadratureConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (s, kind, delta) in [
            (C64::new(1.0, 2.0), ImpedanceKind::Absorbing, 0.1),
            (C64::new(0.5, 8.0), ImpedanceKind::ThinLayer, 10.0),
            (C64::new(1.0, 0.0), ImpedanceKind::ThinLayer, 0.1),
        ] {
            let system = builder.build(s, kind, delta).unwrap();
            for _ in 0..100 {
                let x = random_vector(&mut rng, 2 * system.dof_count());
                assert!(form(&system, &x).re > 0.0, "s = {s}, {kind}, δ = {delta}");
            }
        }
    }

    #[test]
    fn gmres_recovers_manufactured_solution() {
        let system = build_system(&sphere(1), C64::new(1.0, 1.0), ImpedanceKind::ThinLayer, 0.1, &QuadratureConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = random_vector(&mut rng, 2 * system.dof_count());
        let rhs = system.apply(&x0);
        let tol = 1e-10;
        let sol = solve(&system, &rhs, tol, 1000).unwrap();
        assert!(sol.residual <= tol && sol.iterations > 0);
        let cond = condition_report(&system).unwrap().condition;
        let err = vec_norm(&sol.x.iter().zip(&x0).map(|(a, b)| a - b).collect::<Vec<_>>()) / vec_norm(&x0);
        assert!(err <= 10.0 * tol * cond, "error {err}, cond {cond}");

        let direct = solve_direct(&system, &rhs).unwrap();
        assert_eq!(rhs.len(), 240);
        let gap = vec_norm(&direct.x.iter().zip(&sol.x).map(|(a, b)| a - b).collect::<Vec<_>>()) / vec_norm(&direct.x);
        assert!(gap <= 1e-8, "direct vs GMRES {gap}");
        assert!(direct.residual < 1e-12);
    }

    #[test]
    fn gmres_edge_cases() {
        let system = build_system(&sphere(0), C64::new(2.0, 0.0), ImpedanceKind::Absorbing, 1.0, &QuadratureConfig::default()).unwrap();
        let zero = vec![C64::new(0.0, 0.0); 2 * system.dof_count()];
        let sol = solve(&system, &zero, 1e-8, 100).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.iter().all(|z| *z == C64::new(0.0, 0.0)));

        let mut rhs = zero.clone();
        rhs[0] = C64::new(1.0, 0.0);
        match solve(&system, &rhs, 1e-12, 2) {
            Err(CalderonError::NotConverged { iterations, residual }) => assert!(iterations == 2 && residual > 1e-12),
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(solve(&system, &rhs, 0.5, 10).is_err());
        assert!(solve(&system, &rhs[1..], 1e-8, 10).is_err());
        rhs[3] = C64::new(f64::NAN, 0.0);
        assert!(solve_direct(&system, &rhs).is_err());
    }

    #[test]
    fn condition_matches_eigenvalue_oracle() {
        let space = sphere(0);
        let ops = assemble_sparse_operators(&space).unwrap();
        let n = space.dof_count();
        let m = crate::assembly::assemble_mass(&space).unwrap().matrix;
        let p = crate::assembly::assemble_pairing(&space).unwrap().matrix;
        // V = K = 0, Z = mass at s = 1, δ = 1
        let mut a = Mat::<C64>::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                a[(i, j)] = m[(i, j)];
                a[(i, j + n)] = -0.5 * p[(i, j)];
                a[(i + n, j)] = -0.5 * p[(i, j)];
            }
        }
        let stub = BlockSystem {
            frequency: C64::new(1.0, 0.0),
            kind: ImpedanceKind::ThinLayer,
            delta: 1.0,
            n,
            matrix: a.clone(),
            single_layer: Arc::new(GalerkinMatrix { tag: crate::assembly::OperatorTag::SingleLayer, frequency: None, matrix: Mat::zeros(n, n) }),
        };
        drop(ops);
        let report = condition_report(&stub).unwrap();
        let gram = a.adjoint() * &a;
        let eig = gram.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
        assert!((report.condition - (hi / lo).sqrt()).abs() <= 1e-6 * report.condition);
        assert!((report.norm - hi.sqrt()).abs() <= 1e-10 * report.norm);
        assert!(report.condition >= 1.0);

        let scaled = &a * faer::Scale(C64::new(3.0, 0.0));
        let r3 = matrix_condition(&scaled).unwrap();
        assert!((r3.condition - report.condition).abs() <= 1e-10 * report.condition);
    }

    #[test]
    fn dipole_fields_solve_maxwell() {
        let s = C64::new(1.0, 1.5);
        let (x0, p) = (Vec3::new(0.1, 0.0, -0.2), Vec3::new(0.3, -1.0, 0.5));
        let x = Vec3::new(0.9, 0.4, 0.7);
        let h = 1e-5;
        let curl = |f: &dyn Fn(Vec3) -> CVec3| {
            let d = |k: usize, j: usize| {
                let mut e = [0.0; 3];
                e[k] = h;
                let e = Vec3::from_array(e);
                (f(x + e).0[j] - f(x - e).0[j]) / (2.0 * h)
            };
            CVec3([d(1, 2) - d(2, 1), d(2, 0) - d(0, 2), d(0, 1) - d(1, 0)])
        };
        let (e, hf) = dipole_fields(s, x0, p, x);
        let curl_h = curl(&|y| dipole_fields(s, x0, p, y).1);
        let curl_e = curl(&|y| dipole_fields(s, x0, p, y).0);
        assert!((curl_h - e * s).norm() <= 1e-7 * e.norm() * s.norm());
        assert!((curl_e + hf * s).norm() <= 1e-7 * hf.norm() * s.norm());
    }

    #[test]
    fn calderon_identity_residual_converges() {
        let quad = QuadratureConfig::default();
        let residuals: Vec<f64> = (0..3)
            .map(|level| {
                calderon_residual(&sphere(level), C64::new(1.0, 1.0), Vec3::ZERO, Vec3::new(0.2, 0.1, 1.0), &quad)
                    .unwrap()
                    .residual
            })
            .collect();
        for w in residuals.windows(2) {
            assert!(w[1] * 2.0 <= w[0], "residuals {residuals:?}");
        }
    }

    #[test]
    fn inverse_norm_stays_under_resolvent_envelope() {
        let builder = SystemBuilder::new(sphere(0), QuadratureConfig::default()).unwrap();
        let sigma = 1.0;
        let ratios: Vec<f64> = (0..=10)
            .map(|k| {
                let s = C64::new(sigma, 5.0 * k as f64);
                let system = builder.build(s, ImpedanceKind::Absorbing, 0.1).unwrap();
                condition_report(&system).unwrap().inverse_norm * sigma / s.norm_sqr()
            })
            .collect();
        let c = ratios[..3].iter().cloned().fold(0.0, f64::max);
        assert!(ratios.iter().all(|r| *r <= c), "{ratios:?}");
    }
}
