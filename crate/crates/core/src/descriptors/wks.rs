use super::{
    require_modes, weighted_square_sum, DescriptorField, DescriptorKernel, DescriptorKind,
    DescriptorParams,
};
use crate::error::{Error, Result};
use crate::laplace::LaplaceSpectrum;

const ZERO_EIGENVALUE: f64 = 1e-12;

/// Log-energy samples and band width for the wave kernel signature.
#[derive(Debug, Clone, PartialEq)]
pub struct WksSchedule {
    pub energies: Vec<f64>,
    pub sigma: f64,
    pub k_modes: usize,
    /// Scale each band so its mass-weighted integral over the surface is 1.
    pub normalized: bool,
}

impl WksSchedule {
    pub fn new(energies: Vec<f64>, sigma: f64, k_modes: usize, normalized: bool) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidSchedule("no energy samples".into()));
        }
        if energies.iter().any(|e| !e.is_finite()) || energies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(
                "energies must be finite and strictly ascending".into(),
            ));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidSchedule(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self {
            energies,
            sigma,
            k_modes,
            normalized,
        })
    }

    /// `count` energies uniform over `[ln λ_1, ln λ_{k_modes-1}]` with
    /// `σ = sigma_factor · spacing`, normalized bands.
    pub fn uniform(
        spectrum: &LaplaceSpectrum,
        count: usize,
        k_modes: usize,
        sigma_factor: f64,
    ) -> Result<Self> {
        require_modes(spectrum, k_modes)?;
        if k_modes < 3 {
            return Err(Error::InvalidSchedule(format!("k_modes = {k_modes} is below 3")));
        }
        check_positive(spectrum, k_modes)?;
        let lo = spectrum.eigenvalues[1].ln();
        let hi = spectrum.eigenvalues[k_modes - 1].ln();
        if !(lo < hi) {
            return Err(Error::InvalidSchedule(format!(
                "energy interval [{lo}, {hi}] is empty or inverted"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidSchedule("at least two energy samples required".into()));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut energies: Vec<f64> = (0..count).map(|j| lo + step * j as f64).collect();
        energies[count - 1] = hi;
        Self::new(energies, sigma_factor * step, k_modes, true)
    }
}

fn check_positive(spectrum: &LaplaceSpectrum, k_modes: usize) -> Result<()> {
    for k in 1..k_modes {
        let value = spectrum.eigenvalues[k];
        if value <= ZERO_EIGENVALUE {
            return Err(Error::ZeroEigenvalue { index: k, value });
        }
    }
    Ok(())
}

/// Wave kernel signature: column `j` at vertex `x` is
/// `C_j Σ_{k=1}^{k_modes-1} φ_k(x)² exp(-(ρ_j - ln λ_k)² / 2σ²)`,
/// with `C_j` the inverse band sum when normalized and 1 otherwise.
pub fn wks(spectrum: &LaplaceSpectrum, schedule: &WksSchedule) -> Result<DescriptorField> {
    require_modes(spectrum, schedule.k_modes)?;
    check_positive(spectrum, schedule.k_modes)?;
    let cols = schedule.energies.len();
    let modes = schedule.k_modes.saturating_sub(1);
    let log_lambda: Vec<f64> = spectrum.eigenvalues[1..schedule.k_modes]
        .iter()
        .map(|l| l.ln())
        .collect();
    let two_var = 2.0 * schedule.sigma * schedule.sigma;

    let mut weights = vec![0.0; modes * cols];
    for (j, rho) in schedule.energies.iter().enumerate() {
        let exponent = |k: usize| -(rho - log_lambda[k]).powi(2) / two_var;
        if schedule.normalized {
            // Shift by the largest exponent so narrow bands far from any
            // eigenvalue do not underflow to 0/0.
            let top = (0..modes).map(exponent).fold(f64::NEG_INFINITY, f64::max);
            let band: Vec<f64> = (0..modes).map(|k| (exponent(k) - top).exp()).collect();
            let total: f64 = band.iter().sum();
            for (k, b) in band.iter().enumerate() {
                weights[k * cols + j] = b / total;
            }
        } else {
            for k in 0..modes {
                weights[k * cols + j] = exponent(k).exp();
            }
        }
    }

    let values = weighted_square_sum(spectrum, 1, schedule.k_modes, &weights, cols);
    DescriptorField::new(
        DescriptorKind::Wks,
        DescriptorParams::Wks {
            k_modes: schedule.k_modes,
            energies: schedule.energies.clone(),
            sigma: schedule.sigma,
            normalized: schedule.normalized,
        },
        spectrum.vertex_count(),
        cols,
        values,
    )
}

/// WKS with a per-mesh uniform energy schedule.
#[derive(Debug, Clone)]
pub struct WksKernel {
    pub energies: usize,
    pub k_modes: usize,
    pub sigma_factor: f64,
    pub normalized: bool,
}

impl Default for WksKernel {
    fn default() -> Self {
        Self {
            energies: 100,
            k_modes: 300,
            sigma_factor: 7.0,
            normalized: true,
        }
    }
}

impl DescriptorKernel for WksKernel {
    fn name(&self) -> &'static str {
        "wks"
    }

    fn kind(&self) -> DescriptorKind {
        DescriptorKind::Wks
    }

    fn dim(&self) -> usize {
        self.energies
    }

    fn required_modes(&self) -> usize {
        self.k_modes
    }

    fn compute(&self, spectrum: &LaplaceSpectrum) -> Result<DescriptorField> {
        let mut schedule =
            WksSchedule::uniform(spectrum, self.energies, self.k_modes, self.sigma_factor)?;
        schedule.normalized = self.normalized;
        wks(spectrum, &schedule)
    }

    fn config_key(&self) -> String {
        format!(
            "wks:energies={},k_modes={},sigma_factor={},normalized={}",
            self.energies, self.k_modes, self.sigma_factor, self.normalized
        )
    }
}
