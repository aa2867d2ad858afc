//! Block shift-invert Lanczos with full reorthogonalization.
//!
//! Works on the reduced operator `A = M^-1/2 L M^-1/2` through
//! `(A - σI)^-1 = M^1/2 (L - σM)^-1 M^1/2`, so each Krylov step costs one
//! envelope-Cholesky solve. The Krylov basis is kept in full and every new
//! vector is Gram–Schmidt orthogonalized twice against all of it. A start
//! block of several vectors lets exactly repeated eigenvalues (symmetric
//! meshes) be found with their full multiplicity.
//!
//! Converged Ritz vectors are refined by a final Rayleigh–Ritz projection
//! onto `A` itself, and the result is accepted only when every eigenpair
//! meets the residual tolerance of [`super::RESIDUAL_TOL`]; otherwise the
//! basis keeps growing, up to the full dimension.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::envelope::{rcm_order, EnvelopeCholesky};
use super::{check_request, finalize, EigenSolver, LaplaceSpectrum, OperatorPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LanczosSolver {
    /// Spectral shift σ; slightly negative so `L - σM` is positive definite.
    pub shift: f64,
    pub block_size: usize,
    pub seed: u64,
}

impl Default for LanczosSolver {
    fn default() -> Self {
        Self {
            shift: -1e-8,
            block_size: 8,
            seed: 0x5eed_1a9c,
        }
    }
}

struct ShiftInvert {
    factor: EnvelopeCholesky,
    sqrt_mass: Vec<f64>,
}

impl ShiftInvert {
    fn apply(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        for ((o, xi), s) in out.iter_mut().zip(x).zip(&self.sqrt_mass) {
            *o = xi * s;
        }
        self.factor.solve_in_place(out, scratch);
        for (o, s) in out.iter_mut().zip(&self.sqrt_mass) {
            *o *= s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram–Schmidt; returns accumulated coefficients.
/// Each entry of `w` is updated by its own fixed-order sum, so the parallel
/// split does not affect the result.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    const CHUNK: usize = 256;
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let pass: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        w.par_chunks_mut(CHUNK).enumerate().for_each(|(c, part)| {
            let start = c * CHUNK;
            for (v, &coef) in basis.iter().zip(&pass) {
                axpy(-coef, &v[start..start + part.len()], part);
            }
        });
        for (acc, c) in coeffs.iter_mut().zip(pass) {
            *acc += c;
        }
    }
    coeffs
}

fn random_unit_orthogonal(basis: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(basis, &mut v);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Exact null vectors of `A`: `√mass` restricted to each edge-connected
/// component, normalized. `L` has zero row sums, so these are eigenvectors
/// with eigenvalue 0 up to roundoff.
fn null_vectors(ops: &OperatorPair) -> Vec<Vec<f64>> {
    let n = ops.vertex_count();
    let mut component = vec![usize::MAX; n];
    let mut vectors = Vec::new();
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = vectors.len();
        let mut v = vec![0.0; n];
        let mut stack = vec![seed];
        component[seed] = id;
        while let Some(u) = stack.pop() {
            v[u] = ops.mass[u].sqrt();
            for (j, _) in ops.stiffness.row(u) {
                if component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        vectors.push(v);
    }
    vectors
}

impl EigenSolver for LanczosSolver {
    fn name(&self) -> &'static str {
        "lanczos"
    }

    fn solve(&self, ops: &OperatorPair, m: usize) -> Result<LaplaceSpectrum> {
        check_request(ops, m)?;
        let n = ops.vertex_count();
        if m == 0 {
            return finalize(ops, Vec::new(), DMatrix::zeros(n, 0));
        }
        if !(self.shift < 0.0) {
            return Err(Error::InvalidConfig("Lanczos shift must be negative".into()));
        }

        let mut shifted = ops.stiffness.clone();
        let diag: Vec<f64> = ops.mass.iter().map(|w| -self.shift * w).collect();
        shifted.add_diagonal(&diag);
        let order = rcm_order(&shifted);
        let op = ShiftInvert {
            factor: EnvelopeCholesky::factor(&shifted, order)?,
            sqrt_mass: ops.mass.iter().map(|w| w.sqrt()).collect(),
        };
        log::debug!(
            "lanczos: n = {n}, m = {m}, envelope = {}",
            op.factor.envelope_size()
        );

        // The null space is locked up front. Left in the Krylov space, its
        // 1/|σ| amplification would bury every other direction in the
        // first expansion and cost about eight digits.
        let mut basis = null_vectors(ops);
        let locked = basis.len();
        if m <= locked || locked == n {
            return self.extract(ops, &basis, locked, &[], m);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let p = self.block_size.clamp(1, n - locked);
        for _ in 0..p {
            let v = random_unit_orthogonal(&basis, n, &mut rng);
            basis.push(v);
        }
        // columns[j][i] = v_iᵀ Op v_j, j counted from the first unlocked
        // vector, for the basis as it was when v_j was expanded
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut scratch = vec![0.0; n];
        let mut w = vec![0.0; n];

        let free = n - locked;
        let wanted = m - locked;
        let mut target = (wanted + wanted / 4 + p).min(free);
        loop {
            while columns.len() < target && locked + columns.len() < basis.len() {
                let j = locked + columns.len();
                op.apply(&basis[j], &mut w, &mut scratch);
                let before = dot(&w, &w).sqrt();
                let mut coeffs = orthogonalize(&basis, &mut w);
                if basis.len() < n {
                    let beta = dot(&w, &w).sqrt();
                    if beta > 1e-10 * before {
                        w.iter_mut().for_each(|x| *x /= beta);
                        basis.push(w.clone());
                        coeffs.push(beta);
                    } else {
                        // Invariant subspace found; continue with a fresh direction.
                        let v = random_unit_orthogonal(&basis, n, &mut rng);
                        basis.push(v);
                        coeffs.push(0.0);
                    }
                }
                columns.push(coeffs);
            }

            let k = columns.len();
            if k >= wanted {
                match self.extract(ops, &basis, locked, &columns, m) {
                    Ok(spectrum) => return Ok(spectrum),
                    Err(Error::ConvergenceFailure(msg)) if k < free => {
                        log::debug!("lanczos: basis {k} not converged yet ({msg})");
                    }
                    Err(e) => return Err(e),
                }
            }
            if k >= free {
                return Err(Error::ConvergenceFailure(format!(
                    "no convergence with a full basis of {n} vectors"
                )));
            }
            target = (k + (k / 4).max(32)).min(free);
        }
    }
}

impl LanczosSolver {
    fn extract(
        &self,
        ops: &OperatorPair,
        basis: &[Vec<f64>],
        locked: usize,
        columns: &[Vec<f64>],
        m: usize,
    ) -> Result<LaplaceSpectrum> {
        let n = ops.vertex_count();
        let k = columns.len();
        let wanted = m.saturating_sub(locked).min(k);

        if wanted > 0 {
            // Projected shift-inverted operator on the expanded unlocked part.
            let mut t = DMatrix::<f64>::zeros(k, k);
            for (j, col) in columns.iter().enumerate() {
                for (i, &c) in col.iter().enumerate().skip(locked).take(k) {
                    t[(i - locked, j)] += 0.5 * c;
                    t[(j, i - locked)] += 0.5 * c;
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            idx.truncate(wanted);

            // Cheap Ritz residual estimate from the coupling to unexpanded vectors.
            let mut worst = 0.0f64;
            for &r in &idx {
                let theta = eig.eigenvalues[r];
                let mut res = 0.0f64;
                for i in locked + k..basis.len() {
                    let mut acc = 0.0;
                    for (j, col) in columns.iter().enumerate() {
                        if let Some(&c) = col.get(i) {
                            acc += c * eig.eigenvectors[(j, r)];
                        }
                    }
                    res += acc * acc;
                }
                worst = worst.max(res.sqrt() / theta.abs());
            }
            if worst > 1e-6 {
                return Err(Error::ConvergenceFailure(format!(
                    "Ritz residual estimate {worst:.2e}"
                )));
            }
        }

        // Rayleigh–Ritz against A = M^-1/2 L M^-1/2 over the locked and
        // expanded basis.
        let dim = locked + k;
        let mut v = DMatrix::zeros(n, dim);
        for (j, b) in basis.iter().take(dim).enumerate() {
            v.set_column(j, &nalgebra::DVectorView::from_slice(b, n));
        }
        let inv_sqrt: Vec<f64> = ops.mass.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut av = DMatrix::zeros(n, dim);
        let mut x = vec![0.0; n];
        let mut lx = vec![0.0; n];
        for c in 0..dim {
            for i in 0..n {
                x[i] = v[(i, c)] * inv_sqrt[i];
            }
            ops.stiffness.mul_vec(&x, &mut lx);
            for i in 0..n {
                av[(i, c)] = lx[i] * inv_sqrt[i];
            }
        }
        let g = v.transpose() * av;
        let g = (&g + g.transpose()) * 0.5;
        let rr = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| rr.eigenvalues[a].total_cmp(&rr.eigenvalues[b]).then(a.cmp(&b)));
        order.truncate(m);
        let q = DMatrix::from_fn(dim, m, |i, c| rr.eigenvectors[(i, order[c])]);
        let values: Vec<f64> = order.iter().map(|&c| rr.eigenvalues[c]).collect();
        finalize(ops, values, v * q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{build_operators, DenseSolver};
    use crate::mesh::primitives;

    fn compare(mesh: &crate::TriMesh, m: usize) {
        let ops = build_operators(mesh);
        let dense = DenseSolver.solve(&ops, m).unwrap();
        let sparse = LanczosSolver::default().solve(&ops, m).unwrap();
        let floor = dense.eigenvalues.iter().copied().find(|&l| l > 1e-6).unwrap_or(1.0);
        for (a, b) in sparse.eigenvalues.iter().zip(&dense.eigenvalues) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(floor), "{a} vs {b}");
        }
        assert!(sparse.orthonormality_error() < 1e-7);
    }

    #[test]
    fn matches_dense_on_symmetric_sphere() {
        // icosahedral symmetry: eigenvalues with multiplicity up to 5
        compare(&primitives::icosphere(2), 60);
    }

    #[test]
    fn matches_dense_on_bumpy_sphere() {
        compare(&primitives::bumpy_sphere(3, 0.25, 11), 120);
    }

    #[test]
    fn full_spectrum_of_small_mesh() {
        let mesh = primitives::bumpy_sphere(1, 0.2, 5);
        compare(&mesh, mesh.vertex_count());
    }

    #[test]
    fn disconnected_mesh_locks_each_component() {
        let a = primitives::bumpy_sphere(2, 0.2, 6);
        let n = a.vertex_count();
        let mut vertices = a.vertices().to_vec();
        vertices.extend(a.vertices().iter().map(|p| p * 1.5 + nalgebra::Vector3::new(9.0, 0.0, 0.0)));
        let mut faces = a.faces().to_vec();
        faces.extend(a.faces().iter().map(|f| [f[0] + n, f[1] + n, f[2] + n]));
        let mesh = crate::TriMesh::new(vertices, faces).unwrap();
        let ops = build_operators(&mesh);
        assert_eq!(null_vectors(&ops).len(), 2);
        compare(&mesh, 40);
        let spec = LanczosSolver::default().solve(&ops, 3).unwrap();
        assert!(spec.eigenvalues[1].abs() < 1e-10);
        assert!(spec.eigenvalues[2] > 0.1);
    }
}
