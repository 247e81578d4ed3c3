use super::{MeshError, TriangleSurfaceMesh};
use crate::geom::Vec3;
use std::f64::consts::PI;

/// Deepest icosphere subdivision accepted (327 680 triangles).
pub const MAX_ICOSPHERE_LEVEL: u32 = 7;

/// Exact surface used to place new vertices during refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticSurface {
    Sphere { center: Vec3, radius: f64 },
    /// Torus around the z axis, centred at the origin.
    Torus { major_radius: f64, minor_radius: f64 },
}

impl AnalyticSurface {
    pub fn unit_sphere() -> Self {
        AnalyticSurface::Sphere { center: Vec3::ZERO, radius: 1.0 }
    }

    /// Closest point on the surface.
    pub fn project(&self, p: Vec3) -> Vec3 {
        match *self {
            AnalyticSurface::Sphere { center, radius } => center + (p - center).normalized() * radius,
            AnalyticSurface::Torus { major_radius, minor_radius } => {
                let c = torus_core_point(p, major_radius);
                c + (p - c).normalized() * minor_radius
            }
        }
    }

    /// Negative inside the enclosed volume, positive outside.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match *self {
            AnalyticSurface::Sphere { center, radius } => (p - center).norm() - radius,
            AnalyticSurface::Torus { major_radius, minor_radius } => {
                (p - torus_core_point(p, major_radius)).norm() - minor_radius
            }
        }
    }
}

fn torus_core_point(p: Vec3, major_radius: f64) -> Vec3 {
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    if rho == 0.0 {
        Vec3::new(major_radius, 0.0, 0.0)
    } else {
        Vec3::new(major_radius * p.x / rho, major_radius * p.y / rho, 0.0)
    }
}

/// Geodesic sphere: an icosahedron subdivided `level` times, vertices
/// projected to the sphere of the given radius about the origin.
pub fn generate_icosphere(level: u32, radius: f64) -> Result<TriangleSurfaceMesh, MeshError> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(MeshError::ResourceLimit(format!(
            "icosphere level {level} exceeds the maximum of {MAX_ICOSPHERE_LEVEL}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::Domain(format!("sphere radius must be positive, got {radius}")));
    }
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let vertices: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalized() * radius).collect();
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let triangles = faces
        .iter()
        .map(|&[a, b, c]| {
            let n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
            if n.dot(vertices[a] + vertices[b] + vertices[c]) > 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            }
        })
        .collect();
    let mut mesh = TriangleSurfaceMesh::from_triangles(vertices, triangles)?;
    let snap = AnalyticSurface::Sphere { center: Vec3::ZERO, radius };
    for _ in 0..level {
        mesh = refine(&mesh, Some(&snap))?;
    }
    Ok(mesh)
}

/// Structured torus around the z axis with `2 * n_major * n_minor` triangles.
pub fn generate_torus(
    major_radius: f64,
    minor_radius: f64,
    n_major: usize,
    n_minor: usize,
) -> Result<TriangleSurfaceMesh, MeshError> {
    if !(minor_radius > 0.0 && major_radius.is_finite() && minor_radius < major_radius) {
        return Err(MeshError::Domain(format!(
            "torus needs 0 < minor radius < major radius, got R = {major_radius}, r = {minor_radius}"
        )));
    }
    if n_major < 3 || n_minor < 3 {
        return Err(MeshError::Domain(format!(
            "torus resolution must be at least 3 x 3, got {n_major} x {n_minor}"
        )));
    }
    if n_major.saturating_mul(n_minor) > 2_000_000 {
        return Err(MeshError::ResourceLimit(format!("torus resolution {n_major} x {n_minor} is too large")));
    }
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let theta = 2.0 * PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let phi = 2.0 * PI * j as f64 / n_minor as f64;
            let ring = major_radius + minor_radius * phi.cos();
            vertices.push(Vec3::new(ring * theta.cos(), ring * theta.sin(), minor_radius * phi.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut triangles = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            // (theta, phi) increasing is counterclockwise seen from outside
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleSurfaceMesh::from_triangles(vertices, triangles)
}

/// Uniform red refinement: every triangle is split into four through its
/// edge midpoints. With a surface descriptor, midpoints are projected onto it.
pub fn refine(mesh: &TriangleSurfaceMesh, snap: Option<&AnalyticSurface>) -> Result<TriangleSurfaceMesh, MeshError> {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices().to_vec();
    vertices.reserve(mesh.num_edges());
    for &[a, b] in mesh.edges() {
        let mid = (mesh.vertices()[a] + mesh.vertices()[b]) * 0.5;
        vertices.push(match snap {
            Some(s) => s.project(mid),
            None => mid,
        });
    }
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for (tri, local) in mesh.triangles().iter().zip(mesh.triangle_edges()) {
        let [a, b, c] = *tri;
        let [m0, m1, m2] = local.map(|l| nv + l.edge);
        triangles.push([a, m2, m1]);
        triangles.push([m2, b, m0]);
        triangles.push([m1, m0, c]);
        triangles.push([m0, m1, m2]);
    }
    TriangleSurfaceMesh::from_triangles(vertices, triangles)
}
