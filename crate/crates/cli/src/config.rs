//! Optional JSON run configuration. Every section mirrors the library
//! defaults; command-line flags override whatever the file sets.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use deepspectral::descriptors::{DescriptorKernel, DescriptorKind, GpsKernel, HksKernel, WksKernel};
use deepspectral::eval::{GEODESIC_TOLERANCE, SAMPLE_FRACTION};
use deepspectral::siamese::TrainConfig;
use deepspectral::synth::SynthConfig;

use crate::Coded;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub verbosity: Option<u8>,
    pub out_dir: Option<PathBuf>,
    pub descriptors: DescriptorSection,
    pub intrinsic_dim: DimSection,
    pub train: TrainConfig,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub eval: EvalSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| deepspectral::Error::MissingFile(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| Coded::new("ConfigError", format!("{}: {e}", path.display())).into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorSection {
    pub solver: String,
    pub gps_n: usize,
    pub hks_times: usize,
    pub hks_k_modes: usize,
    pub wks_energies: usize,
    pub wks_k_modes: usize,
    pub wks_sigma_factor: f64,
    pub wks_normalized: bool,
    /// Directory for cached spectra and descriptor fields.
    pub cache_dir: Option<PathBuf>,
}

impl Default for DescriptorSection {
    fn default() -> Self {
        let gps = GpsKernel::default();
        let hks = HksKernel::default();
        let wks = WksKernel::default();
        Self {
            solver: "auto".into(),
            gps_n: gps.n,
            hks_times: hks.times,
            hks_k_modes: hks.k_modes,
            wks_energies: wks.energies,
            wks_k_modes: wks.k_modes,
            wks_sigma_factor: wks.sigma_factor,
            wks_normalized: wks.normalized,
            cache_dir: None,
        }
    }
}

impl DescriptorSection {
    pub fn kernel(&self, kind: DescriptorKind) -> Result<Box<dyn DescriptorKernel>> {
        Ok(match kind {
            DescriptorKind::Gps => Box::new(GpsKernel { n: self.gps_n }),
            DescriptorKind::Hks => Box::new(HksKernel {
                times: self.hks_times,
                k_modes: self.hks_k_modes,
            }),
            DescriptorKind::Wks => Box::new(WksKernel {
                energies: self.wks_energies,
                k_modes: self.wks_k_modes,
                sigma_factor: self.wks_sigma_factor,
                normalized: self.wks_normalized,
            }),
            DescriptorKind::Embedded => {
                return Err(Coded::new("InvalidConfig", "embedded fields are produced by `embed`, not computed").into())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimSection {
    pub samples: usize,
    pub k_neighbors: usize,
    pub variance_threshold: f64,
    pub trials: usize,
}

impl Default for DimSection {
    fn default() -> Self {
        let d = deepspectral::intrinsic_dim::DimConfig::default();
        Self {
            samples: 10_000,
            k_neighbors: d.k_neighbors,
            variance_threshold: d.variance_threshold,
            trials: d.trials,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Count,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    pub mode: ModeName,
    pub fraction: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub threshold_on_distance: bool,
}

impl Default for MatchSection {
    fn default() -> Self {
        Self {
            mode: ModeName::Count,
            fraction: SAMPLE_FRACTION,
            tolerance: GEODESIC_TOLERANCE,
            margin: TrainConfig::default().margin,
            threshold_on_distance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub pairs: usize,
    pub chunk: usize,
    pub margin: f64,
    pub threshold_on_distance: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            pairs: t.validation_pairs,
            chunk: t.batch_size,
            margin: t.margin,
            threshold_on_distance: false,
        }
    }
}

/// Assigns `value` to `slot` when the flag was given.
pub fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
