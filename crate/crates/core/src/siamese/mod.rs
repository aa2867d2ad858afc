//! Shared-weight Siamese branch network and its contrastive training.
//!
//! A branch is `standardize → FC → ReLU → FC → ReLU → FC` with a linear
//! output. Both sides of a pair go through the same [`MlpParams`]; there is
//! no second copy of the weights.

mod grad;
mod train;

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::binio;
use crate::descriptors::{DescriptorField, DescriptorKind};
use crate::error::{Error, Result};

pub use grad::{batch_gradients, Adam, Gradients};
pub use train::{train, train_with_validation, TrainConfig, TrainHistory, ValidationPoint};

/// Embedding dimension.
pub const EMBED_DIM: usize = 15;

const FORMAT_VERSION: u8 = 1;

/// One fully-connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Per-dimension affine input normalization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Mean and population standard deviation over every row of every
    /// field. Constant dimensions get scale 1.
    pub fn fit<'a>(fields: impl IntoIterator<Item = &'a DescriptorField>) -> Result<Self> {
        let mut dim = None;
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut fields_seen = Vec::new();
        for f in fields {
            let d = *dim.get_or_insert(f.dim());
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: f.dim(),
                });
            }
            if sum.is_empty() {
                sum = vec![0.0; d];
            }
            for x in 0..f.vertex_count() {
                for (s, v) in sum.iter_mut().zip(f.row(x)) {
                    *s += v;
                }
            }
            count += f.vertex_count();
            fields_seen.push(f);
        }
        if count == 0 {
            return Err(Error::TooFewSamples("no rows to standardize".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; mean.len()];
        for f in fields_seen {
            for x in 0..f.vertex_count() {
                for ((acc, v), m) in var.iter_mut().zip(f.row(x)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / count as f64).sqrt();
                if sd > 1e-12 * m.abs().max(f64::MIN_POSITIVE) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
}

/// Branch network parameters plus the input kind and normalization they
/// were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub kind: DescriptorKind,
    pub layers: Vec<Layer>,
    pub standardization: Option<Standardization>,
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// `inputs[l]` fed layer `l` (after standardization / ReLU).
    pub inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer `l`'s affine output before any ReLU.
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

/// He-normal weights (variance `2 / fan_in`) and zero biases for
/// `d_in → h1 → h2 → d_out`.
pub fn init_params(
    kind: DescriptorKind,
    d_in: usize,
    h1: usize,
    h2: usize,
    d_out: usize,
    seed: u64,
) -> Result<MlpParams> {
    if [d_in, h1, h2, d_out].contains(&0) {
        return Err(Error::InvalidConfig("layer sizes must be positive".into()));
    }
    if h1 < h2 {
        return Err(Error::InvalidConfig(format!(
            "hidden layers must not widen: h1 = {h1} < h2 = {h2}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [d_in, h1, h2, d_out];
    let layers = dims
        .windows(2)
        .map(|w| {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("finite std");
            let mut layer = Layer::zeros(w[0], w[1]);
            layer.weights.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            layer
        })
        .collect();
    Ok(MlpParams {
        kind,
        layers,
        standardization: None,
    })
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    /// `[d_in, h1, …, d_out]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = Vec::new();
        match &self.standardization {
            Some(s) => s.apply(x, &mut a),
            None => a.extend_from_slice(x),
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&a, &mut z);
            inputs.push(a);
            a = if l + 1 < self.layers.len() {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// On/off state of every hidden ReLU for input `x`, layer by layer.
    pub fn hidden_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let t = self.trace(x);
        Ok(t.pre[..t.pre.len() - 1]
            .iter()
            .flat_map(|z| z.iter().map(|v| *v > 0.0))
            .collect())
    }

    /// Embeds one descriptor vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self.trace(x).pre.pop().expect("at least one layer"))
    }

    /// Embeds each row of a row-major matrix; identical to calling
    /// [`forward`](Self::forward) per row.
    pub fn forward_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if rows.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rows.len() % d,
            });
        }
        let out: Vec<Vec<f64>> = rows
            .par_chunks(d)
            .map(|r| self.trace(r).pre.pop().expect("at least one layer"))
            .collect();
        Ok(out.concat())
    }

    /// SMN1: magic, version, kind tag, layer count and dims (u64 LE),
    /// standardization flag and vectors, then each layer's weights
    /// (row-major `out × in`) and biases, all f64 LE.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"SMN1")?;
        binio::write_u8(w, FORMAT_VERSION)?;
        binio::write_u8(w, self.kind.tag())?;
        let dims = self.layer_dims();
        binio::write_u64(w, dims.len() as u64)?;
        for d in dims {
            binio::write_u64(w, d as u64)?;
        }
        match &self.standardization {
            Some(s) => {
                binio::write_u8(w, 1)?;
                binio::write_f64s(w, &s.mean)?;
                binio::write_f64s(w, &s.scale)?;
            }
            None => binio::write_u8(w, 0)?,
        }
        for layer in &self.layers {
            binio::write_f64s(w, &layer.weights)?;
            binio::write_f64s(w, &layer.bias)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"SMN1")?;
        let version = binio::read_u8(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kind = DescriptorKind::from_tag(binio::read_u8(r)?)?;
        let count = binio::read_len(r, "layer count")?;
        if count < 2 {
            return Err(Error::Format("model needs at least two layer sizes".into()));
        }
        let dims = (0..count)
            .map(|_| binio::read_len(r, "layer size"))
            .collect::<Result<Vec<_>>>()?;
        let standardization = match binio::read_u8(r)? {
            0 => None,
            1 => Some(Standardization {
                mean: binio::read_f64s(r, dims[0])?,
                scale: binio::read_f64s(r, dims[0])?,
            }),
            f => return Err(Error::Format(format!("bad standardization flag {f}"))),
        };
        let layers = dims
            .windows(2)
            .map(|w| {
                Ok(Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: binio::read_f64s(r, w[0] * w[1])?,
                    bias: binio::read_f64s(r, w[1])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            layers,
            standardization,
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

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y·d² + (1 − y)·max(0, C − d²)` with `d` the Euclidean distance.
pub fn contrastive_loss(e_f: &[f64], e_g: &[f64], y: f64, margin: f64) -> f64 {
    loss_from_squared(squared_distance(e_f, e_g), y, margin)
}

pub(crate) fn loss_from_squared(d2: f64, y: f64, margin: f64) -> f64 {
    y * d2 + (1.0 - y) * (margin - d2).max(0.0)
}
