//! Triangle mesh of the hand and its OBJ-subset reader/writer.
//!
//! Accepted OBJ records: `v x y z` and `f a b c ...` with 1-based indices
//! (`a/b/c` style references use the leading position index). Polygons with
//! more than three corners are fan-triangulated. `vn`, `vt`, `o`, `g`, `s`
//! records are skipped; anything else is a parse error.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HandModelError;

/// Vertex count of the MANO topology.
pub const MANO_VERTEX_COUNT: usize = 778;

/// Validated triangle mesh. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
}

impl HandMesh {
    /// Builds a mesh, checking face bounds, degenerate faces and connectivity.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self, HandModelError> {
        let n = vertices.len();
        if n == 0 {
            return Err(HandModelError::Topology("mesh has no vertices".into()));
        }
        for (fi, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&v| v as usize >= n) {
                return Err(HandModelError::Topology(format!(
                    "face {fi} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(HandModelError::Topology(format!(
                    "face {fi} is degenerate: {face:?}"
                )));
            }
        }
        for (vi, p) in vertices.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(HandModelError::Topology(format!(
                    "vertex {vi} has a non-finite coordinate"
                )));
            }
        }
        let mesh = Self { vertices, faces };
        let components = mesh.component_count();
        if components != 1 {
            return Err(HandModelError::Topology(format!(
                "mesh must be a single connected component, found {components}"
            )));
        }
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn position(&self, v: u32) -> [f64; 3] {
        self.vertices[v as usize]
    }

    /// Errors unless the mesh has the standard 778-vertex topology.
    pub fn require_standard(&self) -> Result<(), HandModelError> {
        if self.vertex_count() != MANO_VERTEX_COUNT {
            return Err(HandModelError::Topology(format!(
                "expected {MANO_VERTEX_COUNT} vertices, found {}",
                self.vertex_count()
            )));
        }
        Ok(())
    }

    /// Sorted, deduplicated vertex adjacency built from face edges.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
    }

    fn component_count(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.vertices.len()];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.vertices.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push_back(w as usize);
                    }
                }
            }
        }
        count
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 40);
        for p in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }
}

/// Parses OBJ text into a validated mesh.
pub fn parse_obj(text: &str) -> Result<HandMesh, HandModelError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let tag = tokens.next().unwrap_or_default();
        let parse_err = |msg: String| HandModelError::Parse(format!("line {}: {msg}", lineno + 1));
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(format!("bad vertex coordinate: {e}")))?;
                // a trailing w / colour is tolerated
                if coords.len() < 3 {
                    return Err(parse_err(format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            "f" => {
                let mut idx = Vec::new();
                for t in tokens {
                    let head = t.split('/').next().unwrap_or_default();
                    let one_based: i64 = head
                        .parse()
                        .map_err(|e| parse_err(format!("bad face index {t:?}: {e}")))?;
                    if one_based < 1 {
                        return Err(parse_err(format!(
                            "face index {one_based} is not a positive 1-based index"
                        )));
                    }
                    let zero_based = u32::try_from(one_based - 1)
                        .map_err(|_| parse_err(format!("face index {one_based} out of range")))?;
                    idx.push(zero_based);
                }
                if idx.len() < 3 {
                    return Err(parse_err(format!("face needs at least 3 indices, got {}", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "vn" | "vt" | "o" | "g" | "s" => {}
            other => return Err(parse_err(format!("unsupported record {other:?}"))),
        }
    }
    HandMesh::new(vertices, faces)
}

/// Loads and validates a mesh from an OBJ file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<HandMesh, HandModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| HandModelError::Parse(format!("{}: {e}", path.display())))?;
    parse_obj(&text)
}
