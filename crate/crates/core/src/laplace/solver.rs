use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_request, finalize, LanczosSolver, LaplaceSpectrum, OperatorPair};
use crate::error::{Error, Result};

/// A strategy for the smallest `m` eigenpairs of `L φ = λ M φ`.
pub trait EigenSolver: Send + Sync {
    /// Registry name, e.g. `"dense"`.
    fn name(&self) -> &'static str;

    fn solve(&self, ops: &OperatorPair, m: usize) -> Result<LaplaceSpectrum>;
}

/// Dense symmetric eigendecomposition of `M^-1/2 L M^-1/2`.
///
/// O(n³); intended for meshes up to ~1,500 vertices and as the reference
/// for the sparse solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct DenseSolver;

impl EigenSolver for DenseSolver {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, ops: &OperatorPair, m: usize) -> Result<LaplaceSpectrum> {
        check_request(ops, m)?;
        let n = ops.vertex_count();
        let inv_sqrt: Vec<f64> = ops.mass.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in ops.stiffness.row(i) {
                a[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0)
            .ok_or_else(|| Error::ConvergenceFailure("dense symmetric eigensolver failed".into()))?;

        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        idx.truncate(m);
        let values = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, m, |x, k| eig.eigenvectors[(x, idx[k])]);
        finalize(ops, values, vectors)
    }
}

/// Dense below a vertex-count threshold, shift-invert Lanczos above it.
#[derive(Debug, Clone)]
pub struct AutoSolver {
    pub dense_limit: usize,
    pub lanczos: LanczosSolver,
}

impl Default for AutoSolver {
    fn default() -> Self {
        Self {
            dense_limit: 1500,
            lanczos: LanczosSolver::default(),
        }
    }
}

impl EigenSolver for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, ops: &OperatorPair, m: usize) -> Result<LaplaceSpectrum> {
        if ops.vertex_count() <= self.dense_limit {
            DenseSolver.solve(ops, m)
        } else {
            self.lanczos.solve(ops, m)
        }
    }
}

/// Eigensolvers addressable by name.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn EigenSolver>>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        Self { solvers: Vec::new() }
    }

    /// `auto`, `dense` and `lanczos`.
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Box::new(AutoSolver::default()));
        r.register(Box::new(DenseSolver));
        r.register(Box::new(LanczosSolver::default()));
        r
    }

    /// Registers a solver, replacing any existing one with the same name.
    pub fn register(&mut self, solver: Box<dyn EigenSolver>) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn EigenSolver> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownName {
                what: "eigensolver",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::build_operators;
    use crate::mesh::primitives;

    #[test]
    fn registry_lookup() {
        let reg = SolverRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["auto", "dense", "lanczos"]);
        assert_eq!(reg.get("dense").unwrap().name(), "dense");
        assert!(matches!(reg.get("arpack"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn constant_null_mode() {
        let mesh = primitives::bumpy_sphere(2, 0.25, 8);
        let ops = build_operators(&mesh);
        let spec = DenseSolver.solve(&ops, 1).unwrap();
        assert!(spec.eigenvalues[0].abs() < 1e-10);
        let c = 1.0 / ops.total_mass().sqrt();
        for x in 0..mesh.vertex_count() {
            assert!((spec.eigenfunctions[(x, 0)] - c).abs() < 1e-6 * c);
        }
    }
}
