use super::{
    require_modes, weighted_square_sum, DescriptorField, DescriptorKernel, DescriptorKind,
    DescriptorParams,
};
use crate::error::{Error, Result};
use crate::laplace::LaplaceSpectrum;

/// Diffusion times for the heat kernel signature.
#[derive(Debug, Clone, PartialEq)]
pub struct HksSchedule {
    pub times: Vec<f64>,
    pub k_modes: usize,
}

impl HksSchedule {
    /// Explicit ascending, strictly positive times.
    pub fn new(times: Vec<f64>, k_modes: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidSchedule("no time samples".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidSchedule("times must be finite and positive".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule("times must be strictly ascending".into()));
        }
        Ok(Self { times, k_modes })
    }

    /// `count` times log-uniform over `[4 ln 10 / λ_{k_modes-1}, 4 ln 10 / λ_2]`,
    /// both endpoints included.
    pub fn log_spaced(spectrum: &LaplaceSpectrum, count: usize, k_modes: usize) -> Result<Self> {
        require_modes(spectrum, k_modes)?;
        if k_modes < 4 || k_modes + 2 > spectrum.vertex_count() {
            return Err(Error::InvalidSchedule(format!(
                "k_modes = {k_modes} must lie in 4..={} for {} vertices",
                spectrum.vertex_count().saturating_sub(2),
                spectrum.vertex_count()
            )));
        }
        let low = spectrum.eigenvalues[2];
        let high = spectrum.eigenvalues[k_modes - 1];
        if !(low > 0.0) {
            return Err(Error::ZeroEigenvalue { index: 2, value: low });
        }
        let c = 4.0 * std::f64::consts::LN_10;
        let (t_min, t_max) = (c / high, c / low);
        if !(t_min < t_max) {
            return Err(Error::InvalidSchedule(format!(
                "time interval [{t_min:e}, {t_max:e}] is empty or inverted"
            )));
        }
        Self::new(log_uniform(t_min, t_max, count)?, k_modes)
    }
}

fn log_uniform(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    match count {
        0 => Err(Error::InvalidSchedule("no time samples".into())),
        1 => Ok(vec![lo]),
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (count - 1) as f64;
            let mut t: Vec<f64> = (0..count).map(|j| (a + step * j as f64).exp()).collect();
            t[0] = lo;
            t[count - 1] = hi;
            Ok(t)
        }
    }
}

/// Heat kernel signature: column `j` at vertex `x` is
/// `Σ_{k<k_modes} exp(-λ_k t_j) φ_k(x)²`, including the constant mode.
pub fn hks(spectrum: &LaplaceSpectrum, schedule: &HksSchedule) -> Result<DescriptorField> {
    require_modes(spectrum, schedule.k_modes)?;
    let cols = schedule.times.len();
    let mut weights = Vec::with_capacity(schedule.k_modes * cols);
    for &lambda in &spectrum.eigenvalues[..schedule.k_modes] {
        weights.extend(schedule.times.iter().map(|t| (-lambda * t).exp()));
    }
    let values = weighted_square_sum(spectrum, 0, schedule.k_modes, &weights, cols);
    DescriptorField::new(
        DescriptorKind::Hks,
        DescriptorParams::Hks {
            k_modes: schedule.k_modes,
            times: schedule.times.clone(),
        },
        spectrum.vertex_count(),
        cols,
        values,
    )
}

/// HKS with a per-mesh log-spaced schedule.
#[derive(Debug, Clone)]
pub struct HksKernel {
    pub times: usize,
    pub k_modes: usize,
}

impl Default for HksKernel {
    fn default() -> Self {
        Self {
            times: 100,
            k_modes: 300,
        }
    }
}

impl DescriptorKernel for HksKernel {
    fn name(&self) -> &'static str {
        "hks"
    }

    fn kind(&self) -> DescriptorKind {
        DescriptorKind::Hks
    }

    fn dim(&self) -> usize {
        self.times
    }

    fn required_modes(&self) -> usize {
        self.k_modes
    }

    fn compute(&self, spectrum: &LaplaceSpectrum) -> Result<DescriptorField> {
        let schedule = HksSchedule::log_spaced(spectrum, self.times, self.k_modes)?;
        hks(spectrum, &schedule)
    }

    fn config_key(&self) -> String {
        format!("hks:times={},k_modes={}", self.times, self.k_modes)
    }
}
