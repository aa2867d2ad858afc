//! Per-vertex spectral descriptor fields.
//!
//! Each descriptor family is a [`DescriptorKernel`]; the
//! [`DescriptorRegistry`] maps names (`gps`, `hks`, `wks`) to kernels so
//! callers can select one at runtime.

mod gps;
mod hks;
mod wks;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::laplace::LaplaceSpectrum;

pub use gps::{gps, GpsKernel};
pub use hks::{hks, HksKernel, HksSchedule};
pub use wks::{wks, WksKernel, WksSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Gps,
    Hks,
    Wks,
    Embedded,
}

impl DescriptorKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::Gps => 1,
            Self::Hks => 2,
            Self::Wks => 3,
            Self::Embedded => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Self::Gps),
            2 => Ok(Self::Hks),
            3 => Ok(Self::Wks),
            4 => Ok(Self::Embedded),
            _ => Err(Error::Format(format!("unknown descriptor kind tag {tag}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gps => "gps",
            Self::Hks => "hks",
            Self::Wks => "wks",
            Self::Embedded => "embedded",
        }
    }

    /// Default hidden-layer widths of the Siamese branch for this input.
    pub fn default_hidden(self) -> (usize, usize) {
        match self {
            Self::Gps => (20, 18),
            _ => (78, 32),
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gps" => Ok(Self::Gps),
            "hks" => Ok(Self::Hks),
            "wks" => Ok(Self::Wks),
            "embedded" => Ok(Self::Embedded),
            other => Err(Error::UnknownName {
                what: "descriptor kind",
                name: other.to_string(),
            }),
        }
    }
}

/// Parameters a field was computed with; stored in the DSC1 params blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DescriptorParams {
    Gps {
        n: usize,
    },
    Hks {
        k_modes: usize,
        times: Vec<f64>,
    },
    Wks {
        k_modes: usize,
        energies: Vec<f64>,
        sigma: f64,
        normalized: bool,
    },
    Embedded {
        source: DescriptorKind,
    },
}

/// An `n_vertices × d` descriptor matrix, row `x` belonging to vertex `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub kind: DescriptorKind,
    pub params: DescriptorParams,
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DescriptorField {
    /// `values` is row-major with `rows * dim` entries.
    pub fn new(
        kind: DescriptorKind,
        params: DescriptorParams,
        rows: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                actual: values.len(),
            });
        }
        Ok(Self {
            kind,
            params,
            rows,
            dim,
            values,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.dim..(x + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// DSC1: magic, kind tag (u8), `n` and `d` (u64 LE), params blob length
    /// (u64 LE) and JSON blob, then `n × d` f64 LE row-major.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"DSC1")?;
        binio::write_u8(w, self.kind.tag())?;
        binio::write_u64(w, self.rows as u64)?;
        binio::write_u64(w, self.dim as u64)?;
        let blob = serde_json::to_vec(&self.params)?;
        binio::write_u64(w, blob.len() as u64)?;
        w.write_all(&blob)?;
        binio::write_f64s(w, &self.values)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"DSC1")?;
        let kind = DescriptorKind::from_tag(binio::read_u8(r)?)?;
        let rows = binio::read_len(r, "row count")?;
        let dim = binio::read_len(r, "dimension")?;
        let blob_len = binio::read_len(r, "params length")?;
        let mut blob = vec![0u8; blob_len];
        r.read_exact(&mut blob)?;
        let params = serde_json::from_slice(&blob)?;
        let values = binio::read_f64s(r, rows * dim)?;
        Self::new(kind, params, rows, dim, values)
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

/// A spectral descriptor family.
pub trait DescriptorKernel: Send + Sync {
    /// Registry name.
    fn name(&self) -> &'static str;

    fn kind(&self) -> DescriptorKind;

    /// Output dimension per vertex.
    fn dim(&self) -> usize;

    /// Number of eigenpairs (including `λ_0`) the kernel consumes.
    fn required_modes(&self) -> usize;

    fn compute(&self, spectrum: &LaplaceSpectrum) -> Result<DescriptorField>;

    /// Stable text describing the kernel configuration, for cache keys.
    fn config_key(&self) -> String;
}

/// Descriptor kernels addressable by name.
pub struct DescriptorRegistry {
    kernels: Vec<Box<dyn DescriptorKernel>>,
}

impl DescriptorRegistry {
    pub fn new() -> Self {
        Self { kernels: Vec::new() }
    }

    /// GPS (25 modes), HKS and WKS (100 samples over 300 modes).
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Box::new(GpsKernel::default()));
        r.register(Box::new(HksKernel::default()));
        r.register(Box::new(WksKernel::default()));
        r
    }

    /// Registers a kernel, replacing any existing one with the same name.
    pub fn register(&mut self, kernel: Box<dyn DescriptorKernel>) {
        self.kernels.retain(|k| k.name() != kernel.name());
        self.kernels.push(kernel);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DescriptorKernel> {
        self.kernels
            .iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
            .map(|k| k.as_ref())
            .ok_or_else(|| Error::UnknownName {
                what: "descriptor",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kernels.iter().map(|k| k.name()).collect()
    }
}

impl Default for DescriptorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// `Σ_k weight[k][j] φ_k(x)²` for every vertex `x` and column `j`, where
/// `weights` is `k_modes × cols` (row-major) and modes start at `first`.
pub(crate) fn weighted_square_sum(
    spectrum: &LaplaceSpectrum,
    first: usize,
    k_modes: usize,
    weights: &[f64],
    cols: usize,
) -> Vec<f64> {
    let n = spectrum.vertex_count();
    let mut out = vec![0.0; n * cols];
    if cols == 0 {
        return out;
    }
    let phi = &spectrum.eigenfunctions;
    out.par_chunks_mut(cols).enumerate().for_each(|(x, row)| {
        for k in first..k_modes {
            let sq = phi[(x, k)] * phi[(x, k)];
            let w = &weights[(k - first) * cols..(k - first + 1) * cols];
            for (o, wk) in row.iter_mut().zip(w) {
                *o += wk * sq;
            }
        }
    });
    out
}

pub(crate) fn require_modes(spectrum: &LaplaceSpectrum, required: usize) -> Result<()> {
    if spectrum.mode_count() < required {
        return Err(Error::SpectrumTooShort {
            required,
            available: spectrum.mode_count(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn registry_defaults() {
        let reg = DescriptorRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["gps", "hks", "wks"]);
        assert_eq!(reg.get("HKS").unwrap().dim(), 100);
        assert_eq!(reg.get("gps").unwrap().dim(), 25);
        assert_eq!(reg.get("gps").unwrap().required_modes(), 26);
        assert!(reg.get("sihks").is_err());
    }

    #[test]
    fn kind_names_roundtrip() {
        for kind in [
            DescriptorKind::Gps,
            DescriptorKind::Hks,
            DescriptorKind::Wks,
            DescriptorKind::Embedded,
        ] {
            assert_eq!(kind.as_str().parse::<DescriptorKind>().unwrap(), kind);
            assert_eq!(DescriptorKind::from_tag(kind.tag()).unwrap(), kind);
        }
    }

    #[test]
    fn dsc1_rejects_wrong_magic() {
        let bytes = b"LBS1\x00".to_vec();
        assert!(matches!(
            DescriptorField::read_from(&mut bytes.as_slice()),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn dsc1_roundtrip(rows in 0usize..6, dim in 1usize..5, seed in any::<u64>()) {
            let values: Vec<f64> = (0..rows * dim)
                .map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2))
                .collect();
            let field = DescriptorField::new(
                DescriptorKind::Wks,
                DescriptorParams::Wks { k_modes: 7, energies: vec![0.5, 1.5], sigma: 0.25, normalized: true },
                rows, dim, values,
            ).unwrap();
            let mut bytes = Vec::new();
            field.write_to(&mut bytes).unwrap();
            let back = DescriptorField::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            field.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.params, field.params);
        }
    }
}
