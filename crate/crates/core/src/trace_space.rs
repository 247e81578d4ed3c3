//! Lowest-order Raviart–Thomas space on a flat-panel surface mesh.
//!
//! The basis function of edge `e` restricted to a supporting triangle `T`
//! with opposite vertex `p` is `sign · l_e / (2|T|) · (x − p)`, so its normal
//! component along `e` is one and its surface divergence is
//! `sign · l_e / |T|`. The positive side is the triangle whose
//! counterclockwise traversal agrees with the global edge orientation.

use crate::geom::{CVec3, Vec3};
use crate::mesh::TriangleSurfaceMesh;
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::C64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("Raviart–Thomas order {0} is not implemented (only order 0)")]
    Unsupported(usize),
    #[error("triangle index {index} out of range for a mesh with {count} triangles")]
    TriangleOutOfRange { index: usize, count: usize },
}

/// Geometry and local basis data of one triangle.
#[derive(Debug, Clone)]
pub struct Panel {
    pub vertices: [Vec3; 3],
    pub normal: Vec3,
    pub area: f64,
    pub centroid: Vec3,
    /// Radius of the smallest centroid-centred ball containing the panel.
    pub radius: f64,
    pub dofs: [usize; 3],
    /// `sign · l / (2|T|)` per local basis function.
    pub coeffs: [f64; 3],
}

impl Panel {
    #[inline]
    pub fn point(&self, bary: [f64; 3]) -> Vec3 {
        self.vertices[0] * bary[0] + self.vertices[1] * bary[1] + self.vertices[2] * bary[2]
    }

    /// Local basis function `k` at `x`.
    #[inline]
    pub fn basis(&self, k: usize, x: Vec3) -> Vec3 {
        (x - self.vertices[k]) * self.coeffs[k]
    }

    /// Surface divergence of local basis function `k` (constant).
    #[inline]
    pub fn divergence(&self, k: usize) -> f64 {
        2.0 * self.coeffs[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValue {
    pub dof: usize,
    pub value: Vec3,
    pub divergence: f64,
}

#[derive(Debug, Clone)]
pub struct RtSpace {
    mesh: Arc<TriangleSurfaceMesh>,
    order: usize,
    panels: Vec<Panel>,
}

/// Order-0 space on `mesh`.
pub fn build_rt0(mesh: Arc<TriangleSurfaceMesh>) -> RtSpace {
    RtSpace::new(mesh, 0).expect("order 0 is always available")
}

impl RtSpace {
    pub fn new(mesh: Arc<TriangleSurfaceMesh>, order: usize) -> Result<Self, SpaceError> {
        if order != 0 {
            return Err(SpaceError::Unsupported(order));
        }
        let panels = (0..mesh.num_triangles())
            .map(|t| {
                let vertices = mesh.triangle_vertices(t);
                let area = mesh.triangle_area(t);
                let centroid = mesh.triangle_centroid(t);
                let radius = vertices.iter().map(|v| (*v - centroid).norm()).fold(0.0, f64::max);
                let local = mesh.triangle_edges()[t];
                let mut coeffs = [0.0; 3];
                for k in 0..3 {
                    let l = (vertices[(k + 2) % 3] - vertices[(k + 1) % 3]).norm();
                    coeffs[k] = local[k].sign as f64 * l / (2.0 * area);
                }
                Panel {
                    vertices,
                    normal: mesh.triangle_normal(t),
                    area,
                    centroid,
                    radius,
                    dofs: local.map(|l| l.edge),
                    coeffs,
                }
            })
            .collect();
        Ok(RtSpace { mesh, order, panels })
    }

    pub fn mesh(&self) -> &Arc<TriangleSurfaceMesh> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.num_edges()
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn panel(&self, t: usize) -> Result<&Panel, SpaceError> {
        self.panels.get(t).ok_or(SpaceError::TriangleOutOfRange { index: t, count: self.panels.len() })
    }

    /// The three local basis functions of triangle `t` at a barycentric point.
    pub fn eval_basis(&self, t: usize, bary: [f64; 3]) -> Result<[BasisValue; 3], SpaceError> {
        let p = self.panel(t)?;
        let x = p.point(bary);
        Ok(std::array::from_fn(|k| BasisValue { dof: p.dofs[k], value: p.basis(k, x), divergence: p.divergence(k) }))
    }

    /// Rotated test functions `ν × φ` of triangle `t` at a barycentric point.
    pub fn rotated_test_basis(&self, t: usize, bary: [f64; 3]) -> Result<[(usize, Vec3); 3], SpaceError> {
        let p = self.panel(t)?;
        let x = p.point(bary);
        Ok(std::array::from_fn(|k| (p.dofs[k], p.normal.cross(p.basis(k, x)))))
    }

    /// Load vector `(φ_i, f)_{L²(Γ)}` of a field given as a function of the
    /// point and the panel normal, using a triangle rule of the given degree.
    pub fn l2_functional<F>(&self, degree: usize, f: F) -> Vec<C64>
    where
        F: Fn(Vec3, Vec3) -> CVec3,
    {
        let rule = triangle_rule(degree);
        let mut out = vec![C64::new(0.0, 0.0); self.dof_count()];
        for p in &self.panels {
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let x = p.point(*bary);
                let v = f(x, p.normal);
                let scale = w * p.area;
                for k in 0..3 {
                    let b = p.basis(k, x);
                    out[p.dofs[k]] += (v.0[0] * b.x + v.0[1] * b.y + v.0[2] * b.z) * scale;
                }
            }
        }
        out
    }

    /// Degrees of freedom of the canonical interpolant: the mean normal flux
    /// of `f` across every edge, averaged over the two adjacent panels.
    pub fn interpolate<F>(&self, f: F) -> Vec<C64>
    where
        F: Fn(Vec3, Vec3) -> CVec3,
    {
        let (t, w) = gauss_legendre(4);
        let mut out = vec![C64::new(0.0, 0.0); self.dof_count()];
        for (tri, p) in self.panels.iter().enumerate() {
            for k in 0..3 {
                let a = p.vertices[(k + 1) % 3];
                let b = p.vertices[(k + 2) % 3];
                // outward in-plane edge normal of this panel
                let n = (b - a).cross(p.normal).normalized();
                let sign = self.mesh.triangle_edges()[tri][k].sign as f64;
                let mut flux = C64::new(0.0, 0.0);
                for (&u, &wu) in t.iter().zip(&w) {
                    let v = f(a + (b - a) * u, p.normal);
                    flux += (v.0[0] * n.x + v.0[1] * n.y + v.0[2] * n.z) * wu;
                }
                out[p.dofs[k]] += flux * (0.5 * sign);
            }
        }
        out
    }

    /// Evaluate a coefficient vector as a tangential field at a point of
    /// triangle `t`.
    pub fn evaluate(&self, coeffs: &[C64], t: usize, bary: [f64; 3]) -> Result<CVec3, SpaceError> {
        let mut v = CVec3::ZERO;
        for b in self.eval_basis(t, bary)? {
            v += CVec3::from_real(b.value, coeffs[b.dof]);
        }
        Ok(v)
    }
}
