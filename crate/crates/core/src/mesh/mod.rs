//! Closed, oriented triangle surface meshes.
//!
//! Vertices are stored once, triangles reference them counterclockwise as
//! seen from the exterior, and every edge carries a global orientation from
//! its lower to its higher vertex index. Each triangle records, per local
//! edge, the global edge index and whether the local traversal agrees with
//! the global orientation. Local edge `k` of a triangle is the edge opposite
//! its local vertex `k`.

mod generate;
mod off;

pub use generate::{generate_icosphere, generate_torus, refine, AnalyticSurface, MAX_ICOSPHERE_LEVEL};
pub use off::{read_off, write_off};

use crate::geom::Vec3;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("invalid geometry parameters: {0}")]
    Domain(String),
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange { triangle: usize, vertex: usize, count: usize },
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("edge ({0}, {1}) is shared by {2} triangles; a closed surface needs exactly 2")]
    NotWatertight(usize, usize, usize),
    #[error("triangles sharing edge ({0}, {1}) have inconsistent orientation")]
    InconsistentOrientation(usize, usize),
    #[error("triangle normals point into the enclosed volume (signed volume {0:e})")]
    InwardOrientation(f64),
    #[error("empty mesh")]
    Empty,
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Global edge reference from one triangle: index plus orientation sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalEdge {
    pub edge: usize,
    /// +1 if the counterclockwise traversal of the triangle runs along the
    /// global orientation of the edge, -1 otherwise.
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct TriangleSurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[LocalEdge; 3]>,
    edge_triangles: Vec<[usize; 2]>,
}

impl TriangleSurfaceMesh {
    /// Build a mesh from raw vertex and triangle lists, deriving the edge
    /// structure and checking every structural invariant.
    pub fn from_triangles(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite(i));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange { triangle: t, vertex: v, count: vertices.len() });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Degenerate(t));
            }
        }

        let diameter = bounding_diameter(&vertices);
        let min_area = 1e-14 * diameter * diameter;
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            if 0.5 * (b - a).cross(c - a).norm() <= min_area {
                return Err(MeshError::Degenerate(t));
            }
        }

        // Directed edge uses: (lo, hi) -> list of (triangle, local edge, sign)
        let mut uses: HashMap<(usize, usize), Vec<(usize, usize, i8)>> = HashMap::with_capacity(triangles.len() * 3 / 2);
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let (key, sign) = if a < b { ((a, b), 1) } else { ((b, a), -1) };
                uses.entry(key).or_default().push((t, k, sign));
            }
        }

        let mut keys: Vec<(usize, usize)> = uses.keys().copied().collect();
        keys.sort_unstable();
        let mut edges = Vec::with_capacity(keys.len());
        let mut edge_triangles = Vec::with_capacity(keys.len());
        let placeholder = LocalEdge { edge: usize::MAX, sign: 0 };
        let mut triangle_edges = vec![[placeholder; 3]; triangles.len()];
        for (e, key) in keys.iter().enumerate() {
            let list = &uses[key];
            if list.len() != 2 {
                return Err(MeshError::NotWatertight(key.0, key.1, list.len()));
            }
            if list[0].2 == list[1].2 {
                return Err(MeshError::InconsistentOrientation(key.0, key.1));
            }
            edges.push([key.0, key.1]);
            // first entry is the triangle with the positive local sign
            let (pos, neg) = if list[0].2 > 0 { (list[0], list[1]) } else { (list[1], list[0]) };
            edge_triangles.push([pos.0, neg.0]);
            for &(t, k, sign) in list {
                triangle_edges[t][k] = LocalEdge { edge: e, sign };
            }
        }

        let mesh = TriangleSurfaceMesh { vertices, triangles, edges, triangle_edges, edge_triangles };
        let volume = mesh.signed_volume();
        if volume <= 0.0 {
            return Err(MeshError::InwardOrientation(volume));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[LocalEdge; 3]] {
        &self.triangle_edges
    }

    /// The two triangles adjacent to an edge; the first one traverses the
    /// edge along its global orientation.
    pub fn edge_triangles(&self) -> &[[usize; 2]] {
        &self.edge_triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    /// Area-weighted normal (cross product of two edges, halved).
    pub fn triangle_area_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_vertices(t);
        (b - a).cross(c - a) * 0.5
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        self.triangle_area_normal(t).norm()
    }

    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        self.triangle_area_normal(t).normalized()
    }

    pub fn triangle_centroid(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_vertices(t);
        (a + b + c) / 3.0
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Mesh width h: the longest edge.
    pub fn mesh_width(&self) -> f64 {
        (0..self.num_edges()).map(|e| self.edge_length(e)).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        bounding_diameter(&self.vertices)
    }

    /// Enclosed volume via the divergence theorem; positive for outward
    /// oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    /// Euclidean distance from a point to the (flat-panel) surface.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_vertices(t);
                (closest_point_on_triangle(p, a, b, c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn bounding_diameter(vertices: &[Vec3]) -> f64 {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for v in vertices {
        lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
        hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
    }
    (hi - lo).norm()
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleSurfaceMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let t = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleSurfaceMesh::from_triangles(v, t).unwrap()
    }

    #[test]
    fn tetrahedron_structure() {
        let m = tetrahedron();
        assert_eq!(m.num_edges(), 6);
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        for (e, [lo, hi]) in m.edges().iter().enumerate() {
            assert!(lo < hi);
            let [tp, tn] = m.edge_triangles()[e];
            let sp = m.triangle_edges()[tp].iter().find(|l| l.edge == e).unwrap().sign;
            let sn = m.triangle_edges()[tn].iter().find(|l| l.edge == e).unwrap().sign;
            assert_eq!((sp, sn), (1, -1));
        }
    }

    #[test]
    fn rejects_open_surface() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let err = TriangleSurfaceMesh::from_triangles(v, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, MeshError::NotWatertight(..)));
    }

    #[test]
    fn rejects_inward_and_inconsistent_orientation() {
        let m = tetrahedron();
        let flipped: Vec<[usize; 3]> = m.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
        let err = TriangleSurfaceMesh::from_triangles(m.vertices().to_vec(), flipped).unwrap_err();
        assert!(matches!(err, MeshError::InwardOrientation(_)));

        let mut mixed = m.triangles().to_vec();
        mixed[0] = [mixed[0][0], mixed[0][2], mixed[0][1]];
        let err = TriangleSurfaceMesh::from_triangles(m.vertices().to_vec(), mixed).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentOrientation(..)));
    }

    #[test]
    fn rejects_bad_indices_and_degenerate_faces() {
        let m = tetrahedron();
        let mut t = m.triangles().to_vec();
        t[1] = [0, 1, 9];
        assert!(matches!(
            TriangleSurfaceMesh::from_triangles(m.vertices().to_vec(), t).unwrap_err(),
            MeshError::VertexOutOfRange { .. }
        ));
        let mut v = m.vertices().to_vec();
        v[3] = Vec3::new(0.5, 0.5, 0.0);
        assert!(matches!(
            TriangleSurfaceMesh::from_triangles(v, m.triangles().to_vec()).unwrap_err(),
            MeshError::Degenerate(_)
        ));
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let inside = closest_point_on_triangle(Vec3::new(0.2, 0.2, 3.0), a, b, c);
        assert!((inside - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let vertex = closest_point_on_triangle(Vec3::new(-1.0, -1.0, 0.0), a, b, c);
        assert_eq!(vertex, a);
        let edge = closest_point_on_triangle(Vec3::new(1.0, 1.0, 0.0), a, b, c);
        assert!((edge - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
