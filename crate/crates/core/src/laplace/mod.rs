//! Discrete Laplace–Beltrami operator (cotangent stiffness, lumped mass) and
//! its smallest generalized eigenpairs `L φ = λ M φ`.
//!
//! The mass matrix is diagonal, so the generalized problem is reduced to the
//! standard symmetric problem `A y = λ y` with `A = M^-1/2 L M^-1/2` and
//! `φ = M^-1/2 y`. Solvers work on that reduced form; see [`EigenSolver`].

mod envelope;
mod lanczos;
mod solver;
mod sparse;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::binio;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub use lanczos::LanczosSolver;
pub use solver::{AutoSolver, DenseSolver, EigenSolver, SolverRegistry};
pub use sparse::SparseMatrix;

/// Cotangents are clamped to this magnitude for near-degenerate triangles.
pub const COT_CLAMP: f64 = 1e6;

/// Relative residual tolerance every returned eigenpair must satisfy:
/// `|L φ - λ M φ| <= RESIDUAL_TOL * (1 + λ) * |M φ|`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Cotangent stiffness `L` (positive semi-definite, zero row sums) and the
/// diagonal of the lumped mass matrix `M`.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub stiffness: SparseMatrix,
    pub mass: Vec<f64>,
}

impl OperatorPair {
    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Assembles the cotangent stiffness matrix and barycentric lumped mass.
///
/// Off-diagonal `L_ij = -(cot α_ij + cot β_ij) / 2` over the triangles
/// sharing edge `(i, j)`; `L_ii = -Σ_j L_ij`; `M_ii` is one third of the
/// incident triangle area.
pub fn build_operators(mesh: &TriMesh) -> OperatorPair {
    let n = mesh.vertex_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.face_count() * 6);
    let mut mass = vec![0.0; n];
    let mut clamped = 0usize;

    for (fi, &[a, b, c]) in mesh.faces().iter().enumerate() {
        let corners = [a, b, c];
        for k in 0..3 {
            let o = corners[k];
            let i = corners[(k + 1) % 3];
            let j = corners[(k + 2) % 3];
            let u = mesh.vertex(i) - mesh.vertex(o);
            let v = mesh.vertex(j) - mesh.vertex(o);
            let mut cot = u.dot(&v) / u.cross(&v).norm();
            if !cot.is_finite() || cot.abs() > COT_CLAMP {
                cot = if cot.is_nan() { 0.0 } else { cot.clamp(-COT_CLAMP, COT_CLAMP) };
                clamped += 1;
            }
            let w = -0.5 * cot;
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
        let third = mesh.face_area(fi) / 3.0;
        for &v in &corners {
            mass[v] += third;
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} cotangent weights to ±{COT_CLAMP:e}");
    }

    let mut stiffness = SparseMatrix::from_triplets(n, triplets);
    stiffness.set_diagonal_from_row_sums();
    OperatorPair { stiffness, mass }
}

/// Ascending eigenvalues, mass-orthonormal eigenfunctions (column `k` is
/// `φ_k`) and the lumped mass vector they are orthonormal against.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: DMatrix<f64>,
    pub mass: Vec<f64>,
}

impl LaplaceSpectrum {
    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Largest `|Σ_x m_x φ_i(x) φ_j(x) - δ_ij|` over all mode pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let weighted = DMatrix::from_fn(self.vertex_count(), self.mode_count(), |x, k| {
            self.mass[x] * self.eigenfunctions[(x, k)]
        });
        let gram = self.eigenfunctions.transpose() * weighted;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Keeps only the first `m` eigenpairs.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.mode_count());
        Self {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenfunctions: self.eigenfunctions.columns(0, m).into_owned(),
            mass: self.mass.clone(),
        }
    }

    /// LBS1: magic, `n` and `m` as u64 LE, `m` eigenvalues, `n` masses, then
    /// the `n × m` eigenfunction matrix column-major, all f64 LE.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"LBS1")?;
        binio::write_u64(w, self.vertex_count() as u64)?;
        binio::write_u64(w, self.mode_count() as u64)?;
        binio::write_f64s(w, &self.eigenvalues)?;
        binio::write_f64s(w, &self.mass)?;
        binio::write_f64s(w, self.eigenfunctions.as_slice())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"LBS1")?;
        let n = binio::read_len(r, "vertex count")?;
        let m = binio::read_len(r, "mode count")?;
        let eigenvalues = binio::read_f64s(r, m)?;
        let mass = binio::read_f64s(r, n)?;
        let phi = binio::read_f64s(r, n * m)?;
        Ok(Self {
            eigenvalues,
            eigenfunctions: DMatrix::from_vec(n, m, phi),
            mass,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Smallest `m` eigenpairs using the default [`AutoSolver`].
pub fn compute_spectrum(ops: &OperatorPair, m: usize) -> Result<LaplaceSpectrum> {
    AutoSolver::default().solve(ops, m)
}

/// Turns reduced-form eigenvectors `y_k` (columns of `reduced`) into a
/// validated spectrum: `φ = M^-1/2 y`, mass-normalized, sign-fixed so the
/// largest-magnitude entry is positive (lowest index on ties), residuals
/// checked against [`RESIDUAL_TOL`].
pub(crate) fn finalize(
    ops: &OperatorPair,
    eigenvalues: Vec<f64>,
    reduced: DMatrix<f64>,
) -> Result<LaplaceSpectrum> {
    let n = ops.vertex_count();
    let m = eigenvalues.len();
    let mut phi = DMatrix::zeros(n, m);
    for k in 0..m {
        let mut col: Vec<f64> = (0..n).map(|x| reduced[(x, k)] / ops.mass[x].sqrt()).collect();
        let norm: f64 = col
            .iter()
            .zip(&ops.mass)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt();
        let mut pivot = 0usize;
        for (x, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = x;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for v in &mut col {
            *v *= sign / norm;
        }
        phi.set_column(k, &nalgebra::DVector::from_vec(col));
    }

    let mut lphi = vec![0.0; n];
    for k in 0..m {
        let col = phi.column(k);
        ops.stiffness.mul_vec(col.as_slice(), &mut lphi);
        let lambda = eigenvalues[k];
        let mut res = 0.0;
        let mut mphi = 0.0;
        for x in 0..n {
            let mp = ops.mass[x] * col[x];
            res += (lphi[x] - lambda * mp).powi(2);
            mphi += mp * mp;
        }
        let (res, mphi) = (res.sqrt(), mphi.sqrt());
        if !(res <= RESIDUAL_TOL * (1.0 + lambda.abs()) * mphi) {
            return Err(Error::ConvergenceFailure(format!(
                "eigenpair {k} (λ = {lambda:.6e}) has residual {res:.3e} > {:.3e}",
                RESIDUAL_TOL * (1.0 + lambda.abs()) * mphi
            )));
        }
    }

    Ok(LaplaceSpectrum {
        eigenvalues,
        eigenfunctions: phi,
        mass: ops.mass.clone(),
    })
}

pub(crate) fn check_request(ops: &OperatorPair, m: usize) -> Result<()> {
    if m > ops.vertex_count() {
        return Err(Error::InsufficientVertices {
            requested: m,
            available: ops.vertex_count(),
        });
    }
    Ok(())
}
