use super::{MeshError, TriangleSurfaceMesh};
use crate::geom::Vec3;
use std::fmt::Write;

/// Upper bound on vertex and face counts accepted from a file header.
const MAX_ENTITIES: usize = 5_000_000;

/// Serialize a mesh as OFF text (triangles only).
pub fn write_off(mesh: &TriangleSurfaceMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.num_edges());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for [a, b, c] in mesh.triangles() {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out
}

/// Parse OFF text into a validated closed mesh. Only triangular faces are
/// accepted; `#` starts a comment that runs to the end of the line.
pub fn read_off(text: &str) -> Result<TriangleSurfaceMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let err = |line: usize, message: String| MeshError::Parse { line, message };

    let (mut line_no, mut first) = lines.next().ok_or_else(|| err(0, "missing OFF header".into()))?;
    if let Some(rest) = first.strip_prefix("OFF") {
        first = rest.trim();
        if first.is_empty() {
            let next = lines.next().ok_or_else(|| err(line_no, "missing element counts".into()))?;
            line_no = next.0;
            first = next.1;
        }
    }
    let counts: Vec<usize> = first
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| err(line_no, format!("bad count {t:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err(err(line_no, "expected vertex and face counts".into()));
    }
    let (nv, nf) = (counts[0], counts[1]);
    if nv > MAX_ENTITIES || nf > MAX_ENTITIES {
        return Err(MeshError::ResourceLimit(format!("OFF header declares {nv} vertices and {nf} faces")));
    }

    let mut vertices = Vec::with_capacity(nv.min(1 << 16));
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| err(line_no, "unexpected end of vertex list".into()))?;
        line_no = ln;
        let xs: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>().map_err(|e| err(ln, format!("bad coordinate {t:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if xs.len() != 3 {
            return Err(err(ln, "vertex needs three coordinates".into()));
        }
        vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
    }

    let mut triangles = Vec::with_capacity(nf.min(1 << 16));
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| err(line_no, "unexpected end of face list".into()))?;
        line_no = ln;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| err(ln, format!("bad index {t:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        match idx.as_slice() {
            [3, a, b, c, ..] => triangles.push([*a, *b, *c]),
            [k, ..] => return Err(err(ln, format!("only triangular faces are supported, got {k} vertices"))),
            [] => unreachable!("blank lines are filtered"),
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, "trailing data after face list".into()));
    }
    TriangleSurfaceMesh::from_triangles(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_icosphere, generate_torus};

    #[test]
    fn round_trip_is_exact() {
        for m in [generate_icosphere(1, 1.0).unwrap(), generate_torus(0.8, 0.2, 5, 4).unwrap()] {
            let back = read_off(&write_off(&m)).unwrap();
            assert_eq!(back.vertices(), m.vertices());
            assert_eq!(back.triangles(), m.triangles());
        }
    }

    #[test]
    fn comments_and_inline_counts() {
        let text = "OFF 4 4 6 # tetra\n0 0 0\n1 0 0\n0 1 0\n# apex\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        let m = read_off(text).unwrap();
        assert_eq!(m.num_edges(), 6);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(read_off(""), Err(MeshError::Parse { .. })));
        assert!(matches!(read_off("OFF\n1 1 0\n0 0\n3 0 0 0\n"), Err(MeshError::Parse { line: 3, .. })));
        assert!(matches!(read_off("OFF\n999999999 1 0\n"), Err(MeshError::ResourceLimit(_))));
        assert!(matches!(read_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 0\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(read_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"), Err(MeshError::VertexOutOfRange { .. })));
    }
}
