//! Graph geodesics: Dijkstra on the edge graph with Euclidean edge lengths.
//!
//! This overestimates true surface geodesics (paths are restricted to edges);
//! it is used for normalized error evaluation only.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Mesh;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub source: usize,
    pub distances: Vec<f64>,
}

impl DistanceField {
    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted adjacency of the edge graph, reusable across many sources.
///
/// Edge lengths are rounded to multiples of a power-of-two quantum chosen so that
/// every simple path sum is exactly representable; path lengths are then
/// independent of summation order and `d(i, j) == d(j, i)` holds bit for bit.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl EdgeGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let edges = mesh.edges();
        let lengths: Vec<f64> = edges
            .iter()
            .map(|&(i, j)| (mesh.position(i) - mesh.position(j)).norm())
            .collect();
        let total: f64 = lengths.iter().sum();
        let quantum = if total > 0.0 {
            2f64.powi(total.log2().ceil() as i32 - 50)
        } else {
            1.0
        };
        let mut adj = vec![Vec::new(); mesh.n_vertices()];
        for (&(i, j), &len) in edges.iter().zip(&lengths) {
            let len = (len / quantum).round() * quantum;
            adj[i].push((j, len));
            adj[j].push((i, len));
        }
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn distances_from(&self, source: usize) -> Result<DistanceField> {
        let n = self.n();
        if source >= n {
            return Err(Error::InvalidArgument(format!(
                "source vertex {source} out of range for {n} vertices"
            )));
        }
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([Entry {
            dist: 0.0,
            vertex: source,
        }]);
        while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, len) in &self.adj[v] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Entry { dist: nd, vertex: w });
                }
            }
        }
        let unreachable = dist.iter().filter(|d| d.is_infinite()).count();
        if unreachable > 0 {
            return Err(Error::Disconnected {
                source_vertex: source,
                unreachable,
                total: n,
            });
        }
        Ok(DistanceField {
            source,
            distances: dist,
        })
    }
}

pub fn geodesic_distances(mesh: &Mesh, source: usize) -> Result<DistanceField> {
    EdgeGraph::new(mesh).distances_from(source)
}

/// Maximum graph distance over `sample_count` sources drawn deterministically from `seed`.
/// When `sample_count ≥ n` every vertex is used as a source.
pub fn geodesic_diameter(mesh: &Mesh, sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be ≥ 1".into()));
    }
    let n = mesh.n_vertices();
    let sources: Vec<usize> = if sample_count >= n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = sample(&mut rng, n, sample_count).into_vec();
        s.sort_unstable();
        s
    };
    let graph = EdgeGraph::new(mesh);
    let mut best = 0.0f64;
    for s in sources {
        best = best.max(graph.distances_from(s)?.max());
    }
    Ok(best)
}
