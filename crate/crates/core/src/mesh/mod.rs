//! Triangle meshes and the discrete operators built on them.

mod geodesic;
pub mod io;
mod operators;
pub mod shapes;

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use geodesic::{geodesic_diameter, geodesic_distances, DistanceField, EdgeGraph};
pub use operators::{assemble_operators, MassMatrix, StiffnessMatrix};

/// Validation policy applied when a mesh is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MeshOptions {
    /// Accept meshes whose edge graph has several components (logged as a warning).
    pub allow_disconnected: bool,
    /// Accept edges shared by more than two faces (logged as a warning).
    pub allow_non_manifold: bool,
}

/// Triangle mesh with 0-based face indices. Vertex order is preserved from input.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_options(vertices, faces, MeshOptions::default())
    }

    pub fn with_options(
        vertices: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        options: MeshOptions,
    ) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if let Some((i, v)) = vertices
            .iter()
            .enumerate()
            .find(|(_, v)| v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidMesh(format!(
                "vertex {i} has non-finite coordinates {v:?}"
            )));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} is degenerate: {f:?}"
                )));
            }
        }
        let mesh = Self { vertices, faces };

        let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &mesh.faces {
            for (a, b) in face_edges(f) {
                *edge_faces.entry(edge_key(a, b)).or_default() += 1;
            }
        }
        if let Some((e, count)) = edge_faces.iter().find(|(_, &c)| c > 2) {
            let msg = format!("edge {e:?} is shared by {count} faces");
            if options.allow_non_manifold {
                log::warn!("non-manifold mesh accepted: {msg}");
            } else {
                return Err(Error::InvalidMesh(format!("non-manifold: {msg}")));
            }
        }

        let components = mesh.component_sizes();
        if components.len() > 1 {
            let unreachable = n - components[0];
            if options.allow_disconnected {
                log::warn!(
                    "mesh has {} connected components; {unreachable} vertices outside the first",
                    components.len()
                );
            } else {
                return Err(Error::Disconnected {
                    source_vertex: 0,
                    unreachable,
                    total: n,
                });
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.vertices[i])
    }

    /// `n × 3` coordinate matrix.
    pub fn vertex_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_vertices(), 3, |i, c| self.vertices[i][c])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (pa, pb, pc) = (self.position(a), self.position(b), self.position(c));
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_faces()).map(|f| self.face_area(f)).sum()
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| face_edges(f).map(|(a, b)| edge_key(a, b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertex adjacency lists of the edge graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Sizes of connected components of the edge graph, the component of vertex 0 first.
    pub fn component_sizes(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n_vertices()];
        let mut sizes = Vec::new();
        for s in 0..self.n_vertices() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut size = 0;
            while let Some(v) = stack.pop() {
                size += 1;
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    /// SHA-256 over the little-endian vertex coordinates and face indices.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_vertices() as u64).to_le_bytes());
        hasher.update((self.n_faces() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v {
                hasher.update(c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Reorders vertices so that new vertex `i` is old vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_vertices();
        if perm.len() != n {
            return Err(Error::Dimension(format!(
                "permutation has length {} for {n} vertices",
                perm.len()
            )));
        }
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inv[old] = new;
        }
        let vertices = perm.iter().map(|&old| self.vertices[old]).collect();
        let faces = self
            .faces
            .iter()
            .map(|f| [inv[f[0]], inv[f[1]], inv[f[2]]])
            .collect();
        Ok(Self { vertices, faces })
    }

    /// Applies `x ↦ R x + t` to every vertex.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        self.map_vertices(|p| rotation * p + translation)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_vertices(|p| p * factor)
    }

    /// Copy with vertex positions replaced through `f`; connectivity is unchanged.
    pub fn map_vertices(&self, mut f: impl FnMut(Vector3<f64>) -> Vector3<f64>) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|&v| {
                let p = f(Vector3::from(v));
                [p.x, p.y, p.z]
            })
            .collect();
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }
}

fn face_edges(f: &[usize; 3]) -> [(usize, usize); 3] {
    [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
