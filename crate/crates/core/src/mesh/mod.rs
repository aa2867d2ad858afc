//! Triangle meshes, file I/O and edge-graph geodesics.

mod geodesic;
mod io;
pub mod primitives;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub use geodesic::{geodesic_distances, shape_diameter, shape_diameter_on, EdgeGraph, GeodesicField};
pub use io::{load_mesh, parse_mesh, save_obj, write_obj, MeshFormat};

/// Relative floor below which a triangle counts as zero-area.
const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

/// An indexed triangle mesh.
///
/// Construction through [`TriMesh::new`] validates that every index is in
/// range, that no face repeats a vertex, and that no face has (numerically)
/// zero area relative to the mean edge length.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= n {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index,
                        vertex_count: n,
                    });
                }
            }
            if face[0] == face[1] || face[0] == face[2] {
                return Err(Error::RepeatedVertex { face: fi, index: face[0] });
            }
            if face[1] == face[2] {
                return Err(Error::RepeatedVertex { face: fi, index: face[1] });
            }
        }
        let mesh = Self { vertices, faces };
        if !mesh.faces.is_empty() {
            let mean_edge = mesh.mean_edge_length();
            let floor = DEGENERATE_AREA_FACTOR * mean_edge * mean_edge;
            for fi in 0..mesh.faces.len() {
                let area = mesh.face_area(fi);
                if !(area > floor) {
                    return Err(Error::DegenerateFace { face: fi });
                }
            }
        }
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex(&self, i: usize) -> &Point3<f64> {
        &self.vertices[i]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face];
        let (pa, pb, pc) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Mean length over face edges (shared edges are counted once per face).
    pub fn mean_edge_length(&self) -> f64 {
        if self.faces.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for &[a, b, c] in &self.faces {
            total += (self.vertices[a] - self.vertices[b]).norm();
            total += (self.vertices[b] - self.vertices[c]).norm();
            total += (self.vertices[c] - self.vertices[a]).norm();
        }
        total / (3 * self.faces.len()) as f64
    }

    /// Returns a copy with every vertex mapped through `f`. Topology is kept
    /// and the result is re-validated.
    pub fn map_vertices<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&Point3<f64>) -> Point3<f64>,
    {
        Self::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    /// Applies `rotation * p + translation` to every vertex.
    pub fn rigid_transform(
        &self,
        rotation: &nalgebra::Rotation3<f64>,
        translation: &Vector3<f64>,
    ) -> Result<Self> {
        self.map_vertices(|p| rotation * p + translation)
    }

    /// Reorders vertices so that new vertex `i` is old vertex `order[i]`.
    pub fn permute_vertices(&self, order: &[usize]) -> Result<Self> {
        let n = self.vertices.len();
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: order.len(),
            });
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidConfig("order is not a permutation".into()));
            }
            inverse[old] = new;
        }
        let vertices = order.iter().map(|&old| self.vertices[old]).collect();
        let faces = self
            .faces
            .iter()
            .map(|f| [inverse[f[0]], inverse[f[1]], inverse[f[2]]])
            .collect();
        Self::new(vertices, faces)
    }

    /// Raw geometry bytes, used for content-hash cache keys.
    pub(crate) fn content_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.vertices.len() * 24 + self.faces.len() * 24);
        for p in &self.vertices {
            for c in p.coords.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        out
    }
}
