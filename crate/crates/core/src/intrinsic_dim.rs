//! Local-PCA estimate of the intrinsic dimension of a descriptor population.
//!
//! Each trial picks a random sample, gathers it and its `k` nearest
//! neighbours, and counts the principal components needed to explain a
//! fixed fraction of the patch variance. The summary is the most frequent
//! per-trial count.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::descriptors::DescriptorField;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DimConfig {
    pub k_neighbors: usize,
    pub variance_threshold: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for DimConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            variance_threshold: 0.99,
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimReport {
    pub trials: usize,
    pub k_neighbors: usize,
    pub variance_threshold: f64,
    /// Estimated dimension per trial, each in `1..=ambient`.
    pub dimensions: Vec<usize>,
    /// Per trial, `curves[t][d]` is the variance fraction left after `d`
    /// components; `curves[t][0] == 1` and `curves[t][ambient] == 0`.
    pub curves: Vec<Vec<f64>>,
    /// Most frequent per-trial dimension (smallest on ties).
    pub summary: usize,
}

impl DimReport {
    /// CSV with header `trial,component,residual`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "trial,component,residual")?;
        for (t, curve) in self.curves.iter().enumerate() {
            for (d, r) in curve.iter().enumerate() {
                writeln!(w, "{t},{d},{r}")?;
            }
        }
        Ok(())
    }

    /// Number of trials per estimated dimension, indexed by dimension.
    pub fn histogram(&self) -> Vec<usize> {
        let top = self.dimensions.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0; top + 1];
        for &d in &self.dimensions {
            counts[d] += 1;
        }
        counts
    }
}

pub fn estimate_intrinsic_dimension(samples: &[Vec<f64>], config: &DimConfig) -> Result<DimReport> {
    let k = config.k_neighbors;
    if k < 3 {
        return Err(Error::InvalidConfig(format!("k_neighbors = {k} is below 3")));
    }
    if samples.len() < k + 1 {
        return Err(Error::TooFewSamples(format!(
            "{} samples for k_neighbors = {k}",
            samples.len()
        )));
    }
    if config.trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    if !(config.variance_threshold > 0.0 && config.variance_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variance threshold {} outside (0, 1]",
            config.variance_threshold
        )));
    }
    let ambient = samples[0].len();
    if ambient == 0 {
        return Err(Error::InvalidConfig("samples have dimension 0".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != ambient) {
        return Err(Error::DimensionMismatch {
            expected: ambient,
            actual: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<usize> = (0..config.trials)
        .map(|_| rng.random_range(0..samples.len()))
        .collect();

    let results: Vec<(usize, Vec<f64>)> = centers
        .par_iter()
        .map(|&c| {
            let patch = nearest(samples, c, k);
            let spectrum = patch_variances(samples, &patch, ambient);
            trial_result(&spectrum, config.variance_threshold)
        })
        .collect();

    let (dimensions, curves): (Vec<usize>, Vec<Vec<f64>>) = results.into_iter().unzip();
    let mut report = DimReport {
        trials: config.trials,
        k_neighbors: k,
        variance_threshold: config.variance_threshold,
        dimensions,
        curves,
        summary: 0,
    };
    let hist = report.histogram();
    report.summary = (0..hist.len()).rev().max_by_key(|&d| hist[d]).unwrap_or(1);
    Ok(report)
}

/// The center followed by its `k` nearest other samples (lowest index on
/// distance ties).
fn nearest(samples: &[Vec<f64>], center: usize, k: usize) -> Vec<usize> {
    let c = &samples[center];
    let mut dist: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != center)
        .map(|(i, s)| (s.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    std::iter::once(center).chain(dist.into_iter().map(|(_, i)| i)).collect()
}

/// Descending PCA variances of the mean-centered patch, padded with zeros
/// to `ambient` entries.
fn patch_variances(samples: &[Vec<f64>], patch: &[usize], ambient: usize) -> Vec<f64> {
    let p = patch.len();
    let mut mean = vec![0.0; ambient];
    for &i in patch {
        for (m, v) in mean.iter_mut().zip(&samples[i]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= p as f64);
    let centered = DMatrix::from_fn(p, ambient, |r, c| samples[patch[r]][c] - mean[c]);
    let scale = 1.0 / (p - 1) as f64;
    // Covariance and patch Gram matrix share their nonzero eigenvalues.
    let small = if p <= ambient {
        &centered * centered.transpose() * scale
    } else {
        centered.transpose() * &centered * scale
    };
    let mut values: Vec<f64> = SymmetricEigen::new(small)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.resize(ambient, 0.0);
    values
}

fn trial_result(variances: &[f64], threshold: f64) -> (usize, Vec<f64>) {
    let ambient = variances.len();
    let mut tail = vec![0.0; ambient + 1];
    for d in (0..ambient).rev() {
        tail[d] = tail[d + 1] + variances[d];
    }
    let total = tail[0];
    if total <= 0.0 {
        let mut curve = vec![0.0; ambient + 1];
        curve[0] = 1.0;
        return (1, curve);
    }
    let curve: Vec<f64> = tail.iter().map(|t| t / total).collect();
    let mut explained = 0.0;
    let mut dim = ambient;
    for (d, v) in variances.iter().enumerate() {
        explained += v;
        if explained >= threshold * total {
            dim = d + 1;
            break;
        }
    }
    (dim, curve)
}

/// Draws `count` descriptor rows uniformly over all vertices of all fields.
pub fn sample_descriptor_rows<R: Rng>(
    fields: &[DescriptorField],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let index: Vec<(usize, usize)> = fields
        .iter()
        .enumerate()
        .flat_map(|(f, field)| (0..field.vertex_count()).map(move |x| (f, x)))
        .collect();
    if index.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok((0..count)
        .map(|_| {
            let &(f, x) = index.choose(rng).expect("index is non-empty");
            fields[f].row(x).to_vec()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    /// `count` points `A z + noise` with `z` standard normal in `rank` dims
    /// and `A` a random `ambient × rank` matrix.
    fn linear_cloud(count: usize, rank: usize, ambient: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..ambient * rank).map(|_| StandardNormal.sample(&mut rng)).collect();
        (0..count)
            .map(|_| {
                let z: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..ambient)
                    .map(|i| {
                        let clean: f64 = (0..rank).map(|j| a[i * rank + j] * z[j]).sum();
                        let e: f64 = StandardNormal.sample(&mut rng);
                        clean + noise * e
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn plane_in_ten_dimensions() {
        let pts = linear_cloud(1000, 2, 10, 0.0, 1);
        let report = estimate_intrinsic_dimension(
            &pts,
            &DimConfig {
                k_neighbors: 10,
                trials: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.summary, 2);
        for curve in &report.curves {
            assert_eq!(curve.len(), 11);
            assert_eq!(curve[0], 1.0);
            assert!(curve[10].abs() < 1e-12);
            assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn rank_five_is_stable_over_k() {
        let pts = linear_cloud(10_000, 5, 100, 1e-6, 2);
        for k in [6, 10, 20, 25] {
            let report = estimate_intrinsic_dimension(
                &pts,
                &DimConfig {
                    k_neighbors: k,
                    trials: 40,
                    seed: k as u64,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(report.summary, 5, "k = {k}: {:?}", report.histogram());
        }
    }

    #[test]
    fn too_few_samples() {
        let pts = linear_cloud(5, 2, 3, 0.0, 3);
        assert!(matches!(
            estimate_intrinsic_dimension(&pts, &DimConfig::default()),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let pts = linear_cloud(50, 1, 3, 0.0, 4);
        let report = estimate_intrinsic_dimension(
            &pts,
            &DimConfig {
                k_neighbors: 5,
                trials: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,component,residual");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert_eq!(lines[1], "0,0,1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn invariant_under_rotation_and_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let pts = linear_cloud(300, 3, 6, 1e-3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let g = DMatrix::<f64>::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng));
            let q = g.qr().q();
            let moved: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| (0..6).map(|i| scale * (0..6).map(|j| q[(i, j)] * p[j]).sum::<f64>()).collect())
                .collect();
            let config = DimConfig { k_neighbors: 12, trials: 30, seed, ..Default::default() };
            let a = estimate_intrinsic_dimension(&pts, &config).unwrap();
            let b = estimate_intrinsic_dimension(&moved, &config).unwrap();
            prop_assert_eq!(a.summary, b.summary);
        }
    }
}
