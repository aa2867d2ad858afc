use rayon::prelude::*;

use super::{loss_from_squared, squared_distance, MlpParams, Trace};
use crate::corpus::PairBatch;
use crate::error::{Error, Result};

/// Pairs per partial sum. Partial sums are reduced in chunk order, so
/// results do not depend on the number of threads.
const CHUNK: usize = 32;

/// Same shapes as the parameters of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: params.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .for_each(|v| v.iter_mut().for_each(|x| *x *= s));
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Accumulates the parameter gradient of one branch given
    /// `upstream = ∂E/∂output`.
    fn backprop(&mut self, params: &MlpParams, trace: &Trace, upstream: &[f64]) {
        let mut delta = upstream.to_vec();
        for l in (0..params.layers.len()).rev() {
            let layer = &params.layers[l];
            let input = &trace.inputs[l];
            let gw = &mut self.weights[l];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
            }
            self.biases[l].iter_mut().zip(&delta).for_each(|(g, d)| *g += d);
            if l > 0 {
                let below = &trace.pre[l - 1];
                let mut next = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        next.iter_mut().zip(row).for_each(|(n, w)| *n += w * d);
                    }
                }
                // ReLU subgradient 0 at 0
                next.iter_mut().zip(below).for_each(|(n, z)| {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                });
                delta = next;
            }
        }
    }
}

/// Mean contrastive loss over the batch and its exact gradient.
///
/// Both branches share `params`, so each pair contributes the sum of its
/// two branch gradients. The hinge `max(0, C − d²)` has subgradient 0 at
/// the kink.
pub fn batch_gradients(params: &MlpParams, batch: &PairBatch, margin: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty pair batch".into()));
    }
    if batch.dim != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: batch.dim,
        });
    }
    let chunks: Vec<(usize, usize)> = (0..batch.len())
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(batch.len())))
        .collect();
    let partials: Vec<(f64, Gradients)> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut grads = Gradients::zeros_like(params);
            let mut loss = 0.0;
            for k in start..end {
                let tf = params.trace(batch.f(k));
                let tg = params.trace(batch.g(k));
                let (ef, eg) = (tf.output(), tg.output());
                let d2 = squared_distance(ef, eg);
                let y = batch.labels[k];
                loss += loss_from_squared(d2, y, margin);
                let hinge = if margin - d2 > 0.0 { 1.0 - y } else { 0.0 };
                let dd2 = y - hinge;
                if dd2 != 0.0 {
                    let up_f: Vec<f64> = ef.iter().zip(eg).map(|(a, b)| 2.0 * dd2 * (a - b)).collect();
                    let up_g: Vec<f64> = up_f.iter().map(|v| -v).collect();
                    grads.backprop(params, &tf, &up_f);
                    grads.backprop(params, &tg, &up_g);
                }
            }
            (loss, grads)
        })
        .collect();

    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &MlpParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (l, layer) in params.layers.iter_mut().enumerate() {
            update(&mut layer.weights, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(&mut layer.bias, &grads.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::DescriptorKind;
    use crate::siamese::{init_params, Layer, Standardization};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(dim: usize, len: usize, rng: &mut ChaCha8Rng) -> PairBatch {
        let mut b = PairBatch::empty(dim);
        for k in 0..len {
            let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = if k % 2 == 0 { 1.0 } else { rng.random_range(0.0..0.2) };
            b.push(&f, &g, y, ((0, k), (1, k)));
        }
        b
    }

    /// ReLU on/off pattern of every hidden unit and the hinge state of
    /// every pair; the loss is a quadratic in any single parameter while
    /// this signature stays fixed.
    fn signature(params: &MlpParams, batch: &PairBatch, margin: f64) -> Vec<bool> {
        let mut sig = Vec::new();
        for k in 0..batch.len() {
            for x in [batch.f(k), batch.g(k)] {
                let t = params.trace(x);
                for z in &t.pre[..t.pre.len() - 1] {
                    sig.extend(z.iter().map(|v| *v > 0.0));
                }
            }
            let d2 = squared_distance(&params.forward(batch.f(k)).unwrap(), &params.forward(batch.g(k)).unwrap());
            sig.push(margin - d2 > 0.0);
        }
        sig
    }

    fn mean_loss(params: &MlpParams, batch: &PairBatch, margin: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..batch.len() {
            let ef = params.forward(batch.f(k)).unwrap();
            let eg = params.forward(batch.g(k)).unwrap();
            total += crate::siamese::contrastive_loss(&ef, &eg, batch.labels[k], margin);
        }
        total / batch.len() as f64
    }

    fn param_mut(params: &mut MlpParams, layer: usize, index: usize) -> &mut f64 {
        let l: &mut Layer = &mut params.layers[layer];
        if index < l.weights.len() {
            &mut l.weights[index]
        } else {
            &mut l.bias[index - l.weights.len()]
        }
    }

    #[test]
    fn matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-5;
        let mut checked = 0;
        for probe in 0..60 {
            let d_in = rng.random_range(2..7);
            let h1 = rng.random_range(3..8);
            let h2 = rng.random_range(2..=h1);
            let d_out = rng.random_range(1..5);
            let mut params = init_params(DescriptorKind::Hks, d_in, h1, h2, d_out, probe).unwrap();
            for l in &mut params.layers {
                l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
            }
            if probe % 2 == 0 {
                params.standardization = Some(Standardization {
                    mean: (0..d_in).map(|_| rng.random_range(-0.5..0.5)).collect(),
                    scale: (0..d_in).map(|_| rng.random_range(0.5..2.0)).collect(),
                });
            }
            let margin = rng.random_range(0.5..5.0);
            let batch = random_batch(d_in, 1 + probe as usize % 4, &mut rng);
            let (loss, grads) = batch_gradients(&params, &batch, margin).unwrap();
            assert!((loss - mean_loss(&params, &batch, margin)).abs() <= 1e-14 * loss.max(1.0));

            // stay away from the hinge kink
            let near_kink = (0..batch.len()).any(|k| {
                let d2 = squared_distance(&params.forward(batch.f(k)).unwrap(), &params.forward(batch.g(k)).unwrap());
                (margin - d2).abs() < 1e-6
            });
            if near_kink {
                continue;
            }
            let base_sig = signature(&params, &batch, margin);
            for l in 0..params.layers.len() {
                let count = params.layers[l].weights.len() + params.layers[l].bias.len();
                for i in 0..count {
                    let analytic = if i < params.layers[l].weights.len() {
                        grads.weights[l][i]
                    } else {
                        grads.biases[l][i - params.layers[l].weights.len()]
                    };
                    let orig = *param_mut(&mut params, l, i);
                    *param_mut(&mut params, l, i) = orig + h;
                    let (plus, sig_p) = (mean_loss(&params, &batch, margin), signature(&params, &batch, margin));
                    *param_mut(&mut params, l, i) = orig - h;
                    let (minus, sig_m) = (mean_loss(&params, &batch, margin), signature(&params, &batch, margin));
                    *param_mut(&mut params, l, i) = orig;
                    if sig_p != base_sig || sig_m != base_sig || analytic.abs() <= 1e-8 {
                        continue;
                    }
                    let numeric = (plus - minus) / (2.0 * h);
                    let rel = (numeric - analytic).abs() / analytic.abs();
                    assert!(rel < 1e-5, "probe {probe} layer {l} param {i}: {analytic} vs {numeric}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 500, "only {checked} coordinates checked");
    }

    #[test]
    fn satisfied_pairs_give_zero_gradient() {
        let params = init_params(DescriptorKind::Hks, 4, 4, 3, 2, 5).unwrap();
        let mut batch = PairBatch::empty(4);
        batch.push(&[0.1, 0.2, 0.3, 0.4], &[0.1, 0.2, 0.3, 0.4], 1.0, ((0, 0), (1, 0)));
        let (far_a, far_b) = ([50.0, -50.0, 50.0, -50.0], [-50.0, 50.0, -50.0, 50.0]);
        let d2 = squared_distance(&params.forward(&far_a).unwrap(), &params.forward(&far_b).unwrap());
        assert!(d2 > 5.0);
        batch.push(&far_a, &far_b, 0.0, ((0, 1), (1, 2)));
        let (loss, grads) = batch_gradients(&params, &batch, 5.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn swapping_branches_keeps_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = init_params(DescriptorKind::Hks, 10, 8, 6, 4, 9).unwrap();
        let batch = random_batch(10, 100, &mut rng);
        let (la, ga) = batch_gradients(&params, &batch, 5.0).unwrap();
        let (lb, gb) = batch_gradients(&params, &batch.swapped(), 5.0).unwrap();
        assert!((la - lb).abs() <= 1e-15 * la.abs());
        for (a, b) in ga.weights.iter().flatten().zip(gb.weights.iter().flatten()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = init_params(DescriptorKind::Hks, 10, 8, 6, 4, 2).unwrap();
        let batch = random_batch(10, 300, &mut rng);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| batch_gradients(&params, &batch, 5.0).unwrap());
        let b = four.install(|| batch_gradients(&params, &batch, 5.0).unwrap());
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut params = init_params(DescriptorKind::Hks, 5, 4, 3, 2, 1).unwrap();
        let before = params.clone();
        let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &Gradients::zeros_like(&before), 0.015);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut params = init_params(DescriptorKind::Hks, 1, 1, 1, 1, 1).unwrap();
        let w0 = params.layers[0].weights[0];
        let mut grads = Gradients::zeros_like(&params);
        grads.weights[0][0] = 1.0;
        let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &grads, 0.015);
        // m̂ = 1, v̂ = 1 → Δ = −lr · 1 / (1 + ε)
        let expected = w0 - 0.015 / (1.0 + 1e-8);
        assert!((params.layers[0].weights[0] - expected).abs() < 1e-15);
        assert_eq!(params.layers[0].bias[0], 0.0);
    }
}
