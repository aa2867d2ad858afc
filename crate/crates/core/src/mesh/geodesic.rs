//! Dijkstra distances over the mesh edge graph.
//!
//! Edge-graph distances overestimate true surface geodesics by a factor
//! bounded by mesh quality; they are used only for coarse acceptance tests
//! (a few percent of the shape diameter), where that bias is tolerable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::TriMesh;
use crate::error::{Error, Result};

const LENGTH_BITS: i32 = 36;

/// Undirected edge graph in CSR layout with Euclidean edge lengths.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    lengths: Vec<f64>,
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties on vertex index
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

impl EdgeGraph {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(mesh.face_count() * 6);
        for &[a, b, c] in mesh.faces() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &edges {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors: Vec<usize> = edges.iter().map(|&(_, v)| v).collect();
        let raw: Vec<f64> = edges
            .iter()
            .map(|&(u, v)| (mesh.vertex(u) - mesh.vertex(v)).norm())
            .collect();
        // Snap lengths to a dyadic grid 2^-36 below the longest edge. Every
        // path sum is then exact in f64, so distances do not depend on the
        // summation order and d(u, v) == d(v, u) bit for bit.
        let longest = raw.iter().copied().fold(0.0f64, f64::max);
        let lengths = if longest > 0.0 {
            let quantum = 2f64.powi(longest.log2().ceil() as i32 - LENGTH_BITS);
            raw.iter().map(|l| (l / quantum).round() * quantum).collect()
        } else {
            raw
        };
        Self {
            offsets,
            neighbors,
            lengths,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Neighbours of `v` with their edge lengths.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.lengths[range].iter().copied())
    }

    /// Full single-source Dijkstra. Unreachable vertices get `+inf`.
    pub fn distances_from(&self, source: usize) -> Result<GeodesicField> {
        let n = self.vertex_count();
        if source >= n {
            return Err(Error::VertexOutOfRange {
                index: source,
                vertex_count: n,
            });
        }
        let distances = self.dijkstra(source, f64::INFINITY, None);
        let unreachable = distances.iter().filter(|d| d.is_infinite()).count();
        if unreachable > 0 {
            log::warn!("{unreachable} vertices unreachable from vertex {source}");
        }
        Ok(GeodesicField {
            source,
            distances,
            unreachable,
        })
    }

    /// Distance from `source` to `target` if it is at most `limit`,
    /// otherwise `None`. The search stops once the frontier passes `limit`,
    /// so the returned value is bit-identical to a full Dijkstra run.
    pub fn distance_within(&self, source: usize, target: usize, limit: f64) -> Option<f64> {
        if source == target {
            return Some(0.0);
        }
        let dist = self.dijkstra(source, limit, Some(target));
        let d = dist[target];
        (d <= limit).then_some(d)
    }

    fn dijkstra(&self, source: usize, limit: f64, stop_at: Option<usize>) -> Vec<f64> {
        let n = self.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry {
            dist: 0.0,
            vertex: source,
        });
        while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            if d > limit {
                break;
            }
            done[u] = true;
            if Some(u) == stop_at {
                break;
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry { dist: nd, vertex: v });
                }
            }
        }
        if stop_at.is_some() || limit.is_finite() {
            // Only settled vertices carry final distances.
            for (d, &settled) in dist.iter_mut().zip(&done) {
                if !settled {
                    *d = f64::INFINITY;
                }
            }
        }
        dist
    }
}

/// Per-vertex distances from one source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub source: usize,
    pub distances: Vec<f64>,
    /// Number of vertices with infinite distance (0 for connected meshes).
    pub unreachable: usize,
}

impl GeodesicField {
    pub fn is_connected(&self) -> bool {
        self.unreachable == 0
    }

    /// Index and value of the farthest reachable vertex, lowest index on ties.
    pub fn farthest(&self) -> (usize, f64) {
        let mut best = (self.source, 0.0);
        for (i, &d) in self.distances.iter().enumerate() {
            if d.is_finite() && d > best.1 {
                best = (i, d);
            }
        }
        best
    }
}

pub fn geodesic_distances(mesh: &TriMesh, source: usize) -> Result<GeodesicField> {
    EdgeGraph::new(mesh).distances_from(source)
}

/// Approximate geodesic diameter by double sweep: Dijkstra from vertex 0,
/// then from the farthest vertex found, returning the largest distance.
pub fn shape_diameter(mesh: &TriMesh) -> Result<f64> {
    shape_diameter_on(&EdgeGraph::new(mesh))
}

pub fn shape_diameter_on(graph: &EdgeGraph) -> Result<f64> {
    let first = graph.distances_from(0)?;
    if !first.is_connected() {
        return Err(Error::DisconnectedMesh {
            source_vertex: 0,
            unreachable: first.unreachable,
        });
    }
    let (far, _) = first.farthest();
    let second = graph.distances_from(far)?;
    Ok(second.farthest().1)
}
