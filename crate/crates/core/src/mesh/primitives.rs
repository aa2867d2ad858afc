//! Procedural test meshes.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;

/// Unit icosphere after `subdivisions` rounds of midpoint subdivision.
/// Has `10 * 4^s + 2` vertices and `20 * 4^s` faces.
pub fn icosphere(subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(Vector3::new(p[0], p[1], p[2]).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords).normalize();
                vertices.push(Point3::from(m));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces).expect("icosphere is valid")
}

/// Open tube of the given radius and height along z, with `segments`
/// vertices around and `rings` vertex rings.
pub fn cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::with_capacity(segments * rings);
    for r in 0..rings {
        let z = height * r as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let a = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let mut faces = Vec::with_capacity(2 * segments * (rings - 1));
    for r in 0..rings - 1 {
        for s in 0..segments {
            let a = r * segments + s;
            let b = r * segments + (s + 1) % segments;
            let c = a + segments;
            let d = b + segments;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh::new(vertices, faces).expect("cylinder is valid")
}

/// Icosphere with a smooth random radial perturbation: a handful of
/// Gaussian bumps of random sign, direction and width. The result has no
/// symmetries, so its Laplace spectrum is simple (non-degenerate).
pub fn bumpy_sphere(subdivisions: u32, amplitude: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(Vector3<f64>, f64, f64)> = (0..7)
        .map(|_| {
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let height = amplitude * rng.random_range(-1.0..1.0);
            let width = rng.random_range(0.15..0.6);
            (dir, height, width)
        })
        .collect();
    // Mild anisotropy removes any residual rotational degeneracy.
    let stretch = Vector3::new(1.0, 1.0 + 0.5 * amplitude, 1.0 - 0.3 * amplitude);
    icosphere(subdivisions)
        .map_vertices(|p| {
            let u = p.coords;
            let mut r = 1.0;
            for (dir, height, width) in &bumps {
                let gap = 1.0 - u.dot(dir);
                r += height * (-gap / width).exp();
            }
            Point3::from((u * r).component_mul(&stretch))
        })
        .expect("perturbed sphere is valid")
}
