//! Envelope (profile) Cholesky factorization under a reverse Cuthill–McKee
//! ordering. Mesh Laplacians reordered by RCM have a narrow profile, which
//! makes this both simple and fast enough for meshes of a few thousand to
//! tens of thousands of vertices.

use std::collections::VecDeque;

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill–McKee ordering of the matrix graph. `order[p]` is the
/// original index placed at position `p`.
pub(crate) fn rcm_order(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // returns (last vertex of last level, eccentricity)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        dist[start] = 0;
        q.push_back(start);
        let mut last = start;
        while let Some(u) = q.pop_front() {
            if dist[u] > dist[last] || (dist[u] == dist[last] && degree[u] < degree[last]) {
                last = u;
            }
            for (v, _) in a.row(u) {
                if v != u && !visited[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (last, dist[last])
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start: a few BFS sweeps from a min-degree vertex.
        let mut start = seed;
        let mut ecc = 0;
        for _ in 0..4 {
            let (far, e) = bfs_levels(start, &visited);
            if e <= ecc && start != seed {
                break;
            }
            ecc = e;
            start = far;
        }

        let mut q = VecDeque::new();
        visited[start] = true;
        q.push_back(start);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = a
                .row(u)
                .map(|(v, _)| v)
                .filter(|&v| v != u && !visited[v])
                .collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Lower-triangular Cholesky factor stored row-wise over each row's
/// envelope `first[i]..=i`.
#[derive(Debug, Clone)]
pub(crate) struct EnvelopeCholesky {
    order: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `P A Pᵀ = L Lᵀ` for symmetric positive definite `A`.
    pub(crate) fn factor(a: &SparseMatrix, order: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        let mut position = vec![0usize; n];
        for (p, &old) in order.iter().enumerate() {
            position[old] = p;
        }

        let mut first = vec![0usize; n];
        for (p, &old) in order.iter().enumerate() {
            first[p] = a
                .row(old)
                .map(|(j, _)| position[j])
                .filter(|&q| q <= p)
                .min()
                .unwrap_or(p);
        }
        let mut offset = vec![0usize; n + 1];
        for p in 0..n {
            offset[p + 1] = offset[p] + (p - first[p] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for (p, &old) in order.iter().enumerate() {
            for (j, v) in a.row(old) {
                let q = position[j];
                if q <= p {
                    values[offset[p] + (q - first[p])] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let row_j = offset[j];
                let start = fi.max(fj);
                let mut s = values[row_i + (j - fi)];
                for k in start..j {
                    s -= values[row_i + (k - fi)] * values[row_j + (k - fj)];
                }
                values[row_i + (j - fi)] = s / values[row_j + (j - fj)];
            }
            let mut d = values[row_i + (i - fi)];
            for k in fi..i {
                let l = values[row_i + (k - fi)];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::ConvergenceFailure(format!(
                    "shifted operator is not positive definite (pivot {i} = {d:e})"
                )));
            }
            values[row_i + (i - fi)] = d.sqrt();
        }

        Ok(Self {
            order,
            first,
            offset,
            values,
        })
    }

    /// Number of stored factor entries.
    pub(crate) fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b` in place (`x` holds `b` on entry), using `scratch`
    /// of length `n`.
    pub(crate) fn solve_in_place(&self, x: &mut [f64], scratch: &mut [f64]) {
        let n = self.order.len();
        for (p, &old) in self.order.iter().enumerate() {
            scratch[p] = x[old];
        }
        // forward: L z = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = scratch[i];
            for (k, l) in (fi..i).zip(row) {
                s -= l * scratch[k];
            }
            scratch[i] = s / row[i - fi];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let xi = scratch[i] / row[i - fi];
            scratch[i] = xi;
            for (k, l) in (fi..i).zip(row) {
                scratch[k] -= l * xi;
            }
        }
        for (p, &old) in self.order.iter().enumerate() {
            x[old] = scratch[p];
        }
    }
}
