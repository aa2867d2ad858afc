use super::{require_modes, DescriptorField, DescriptorKernel, DescriptorKind, DescriptorParams};
use crate::error::{Error, Result};
use crate::laplace::LaplaceSpectrum;

/// Eigenvalues at or below this are treated as zero.
const ZERO_EIGENVALUE: f64 = 1e-12;

/// Global point signature: row `x` is `[φ_1(x)/√λ_1, …, φ_n(x)/√λ_n]`.
pub fn gps(spectrum: &LaplaceSpectrum, n: usize) -> Result<DescriptorField> {
    require_modes(spectrum, n + 1)?;
    for k in 1..=n {
        let value = spectrum.eigenvalues[k];
        if value <= ZERO_EIGENVALUE {
            return Err(Error::ZeroEigenvalue { index: k, value });
        }
    }
    let root: Vec<f64> = (1..=n).map(|k| spectrum.eigenvalues[k].sqrt()).collect();
    let rows = spectrum.vertex_count();
    let phi = &spectrum.eigenfunctions;
    let mut values = Vec::with_capacity(rows * n);
    for x in 0..rows {
        values.extend((1..=n).map(|k| phi[(x, k)] / root[k - 1]));
    }
    DescriptorField::new(DescriptorKind::Gps, DescriptorParams::Gps { n }, rows, n, values)
}

#[derive(Debug, Clone)]
pub struct GpsKernel {
    pub n: usize,
}

impl Default for GpsKernel {
    fn default() -> Self {
        Self { n: 25 }
    }
}

impl DescriptorKernel for GpsKernel {
    fn name(&self) -> &'static str {
        "gps"
    }

    fn kind(&self) -> DescriptorKind {
        DescriptorKind::Gps
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn required_modes(&self) -> usize {
        self.n + 1
    }

    fn compute(&self, spectrum: &LaplaceSpectrum) -> Result<DescriptorField> {
        gps(spectrum, self.n)
    }

    fn config_key(&self) -> String {
        format!("gps:n={}", self.n)
    }
}
