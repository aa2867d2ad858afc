use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_gradients, init_params, Adam, MlpParams, Standardization, EMBED_DIM};
use crate::corpus::{pick_model_pair, sample_labeled_pairs, sample_pairs_between, Corpus, NegativeLabel, PairBatch};
use crate::descriptors::DescriptorKind;
use crate::error::{Error, Result};
use crate::eval::{classification_metrics, ClassificationMetrics, Threshold};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub soft_label_max: f64,
    pub seed: u64,
    /// Hidden widths; `None` picks the default for the descriptor kind.
    pub hidden: Option<(usize, usize)>,
    pub output_dim: usize,
    /// Fit per-dimension input standardization on the training corpus.
    pub standardize: bool,
    /// Validation cadence in iterations; 0 disables periodic checkpoints.
    pub validation_every: usize,
    pub validation_pairs: usize,
    /// Classify validation pairs on distance instead of squared distance.
    pub threshold_on_distance: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 5.0,
            batch_size: 512,
            iterations: 10_000,
            lr0: 0.015,
            lr_decay: 0.9999,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            soft_label_max: 0.2,
            seed: 0,
            hidden: None,
            output_dim: EMBED_DIM,
            standardize: true,
            validation_every: 250,
            validation_pairs: 2048,
            threshold_on_distance: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be positive", self.margin));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return bad(format!("batch size {} must be even and positive", self.batch_size));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr decay {} outside (0, 1]", self.lr_decay));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr0));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam needs 0 ≤ β < 1 and ε > 0".into());
        }
        if !(0.0..=1.0).contains(&self.soft_label_max) {
            return bad(format!("soft label bound {} outside [0, 1]", self.soft_label_max));
        }
        if self.output_dim == 0 {
            return bad("output dimension must be positive".into());
        }
        Ok(())
    }

    /// Learning rate used at 0-based step `it`.
    pub fn learning_rate(&self, it: usize) -> f64 {
        self.lr0 * self.lr_decay.powf(it as f64)
    }

    /// Pairs seen over the whole run.
    pub fn total_samples(&self) -> usize {
        self.batch_size * self.iterations
    }

    pub fn threshold(&self) -> Threshold {
        Threshold::half_margin(self.margin, self.threshold_on_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    /// Number of optimizer steps taken before the evaluation.
    pub iteration: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean batch loss of each step, before its update.
    pub losses: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
}

impl TrainHistory {
    /// CSV `iteration,loss`.
    pub fn write_loss_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "iteration,loss")?;
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        Ok(())
    }

    /// CSV `iteration,lss,tnr,fpr,err`.
    pub fn write_validation_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "iteration,lss,tnr,fpr,err")?;
        for p in &self.validation {
            let m = &p.metrics;
            writeln!(w, "{},{},{},{},{}", p.iteration, m.lss, m.tnr, m.fpr, m.err)?;
        }
        Ok(())
    }
}

const STREAM_BATCHES: u64 = 1;
const STREAM_VALIDATION: u64 = 2;

/// Trains a branch network on `kind` descriptors of `corpus`, validating on
/// pairs drawn from the same corpus.
pub fn train(corpus: &Corpus, kind: DescriptorKind, config: &TrainConfig) -> Result<(MlpParams, TrainHistory)> {
    train_with_validation(corpus, kind, config, None)
}

/// As [`train`], with an explicit validation set (for example pairs from
/// held-out subjects). With `None`, `validation_pairs` hard-labelled pairs
/// are drawn from `corpus` when `validation_every > 0`.
pub fn train_with_validation(
    corpus: &Corpus,
    kind: DescriptorKind,
    config: &TrainConfig,
    validation: Option<&PairBatch>,
) -> Result<(MlpParams, TrainHistory)> {
    config.validate()?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    batch_rng.set_stream(STREAM_BATCHES);
    // Fails early with EmptyCorpus / DescriptorMissing.
    pick_model_pair(corpus, kind, &mut batch_rng.clone())?;

    let usable = corpus.models_with(kind);
    let fields: Vec<_> = usable.iter().map(|&i| &corpus.model(i).descriptors[&kind]).collect();
    let d_in = fields[0].dim();
    let (h1, h2) = config.hidden.unwrap_or_else(|| kind.default_hidden());
    let mut params = init_params(kind, d_in, h1, h2, config.output_dim, config.seed)?;
    if config.standardize {
        params.standardization = Some(Standardization::fit(fields.iter().copied())?);
    }

    let owned_validation;
    let validation = match validation {
        Some(v) => Some(v),
        None if config.validation_every > 0 && config.validation_pairs > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(STREAM_VALIDATION);
            let chunk = config.batch_size.min(512);
            owned_validation = sample_labeled_pairs(corpus, kind, config.validation_pairs, chunk, &mut rng)?;
            Some(&owned_validation)
        }
        None => None,
    };
    let threshold = config.threshold();
    let mut history = TrainHistory::default();
    let checkpoint = |params: &MlpParams, it: usize, history: &mut TrainHistory| -> Result<()> {
        if let Some(v) = validation {
            let metrics = classification_metrics(params, v, config.margin, threshold)?;
            log::info!(
                "iteration {it}: lss {:.4} tnr {:.4} fpr {:.4} err {:.4}",
                metrics.lss,
                metrics.tnr,
                metrics.fpr,
                metrics.err
            );
            history.validation.push(ValidationPoint { iteration: it, metrics });
        }
        Ok(())
    };

    checkpoint(&params, 0, &mut history)?;
    let mut adam = Adam::new(&params, config.beta1, config.beta2, config.epsilon);
    let negative = NegativeLabel::Soft {
        max: config.soft_label_max,
    };
    for it in 0..config.iterations {
        let (a, b) = pick_model_pair(corpus, kind, &mut batch_rng)?;
        let batch = sample_pairs_between(corpus, kind, a, b, config.batch_size, negative, &mut batch_rng)?;
        let (loss, grads) = batch_gradients(&params, &batch, config.margin)?;
        history.losses.push(loss);
        adam.step(&mut params, &grads, config.learning_rate(it));
        let done = it + 1;
        let periodic = config.validation_every > 0 && done % config.validation_every == 0;
        if periodic || done == config.iterations {
            checkpoint(&params, done, &mut history)?;
        }
    }
    if !params.is_finite() {
        return Err(Error::ConvergenceFailure("training produced non-finite weights".into()));
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Model;
    use crate::descriptors::{DescriptorField, DescriptorParams};
    use crate::mesh::primitives;
    use crate::siamese::contrastive_loss;
    use rand::Rng;

    /// Two models whose descriptors are a smooth random map of the vertex
    /// position, the second one distorted per dimension.
    fn two_model_corpus() -> Corpus {
        let mesh = primitives::icosphere(2);
        let n = mesh.vertex_count();
        let dim = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let proj: Vec<f64> = (0..dim * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let make = |warp: f64| {
            let mut values = Vec::with_capacity(n * dim);
            for p in mesh.vertices() {
                for r in 0..dim {
                    let s: f64 = (0..3).map(|c| proj[r * 3 + c] * p[c]).sum();
                    values.push((s * (1.0 + warp * r as f64)).sin());
                }
            }
            DescriptorField::new(
                DescriptorKind::Hks,
                DescriptorParams::Hks { k_modes: 8, times: (1..=dim).map(|t| t as f64).collect() },
                n,
                dim,
                values,
            )
            .unwrap()
        };
        let mut a = Model::new("a", "0", mesh.clone());
        a.descriptors.insert(DescriptorKind::Hks, make(0.0));
        let mut b = Model::new("b", "0", mesh.clone());
        b.descriptors.insert(DescriptorKind::Hks, make(0.3));
        Corpus::new(vec![a, b]).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            hidden: Some((16, 8)),
            validation_every: 100,
            validation_pairs: 256,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.total_samples(), 5_120_000);
        assert!((c.learning_rate(10_000) - 0.00552).abs() < 5e-6);
        assert_eq!(c.threshold(), Threshold::half_margin(5.0, false));
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        for c in [
            TrainConfig { margin: 0.0, ..Default::default() },
            TrainConfig { batch_size: 3, ..Default::default() },
            TrainConfig { lr_decay: 1.5, ..Default::default() },
            TrainConfig { lr_decay: 0.0, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let corpus = two_model_corpus();
        let config = TrainConfig { iterations: 0, standardize: false, ..small_config() };
        let (params, history) = train(&corpus, DescriptorKind::Hks, &config).unwrap();
        assert_eq!(params, init_params(DescriptorKind::Hks, 8, 16, 8, 15, 5).unwrap());
        assert!(history.losses.is_empty());
        assert_eq!(history.validation.len(), 1);
    }

    #[test]
    fn probe_loss_drops() {
        let corpus = two_model_corpus();
        let config = TrainConfig { iterations: 500, ..small_config() };
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let probe = sample_labeled_pairs(&corpus, DescriptorKind::Hks, 512, 512, &mut rng).unwrap();
        let probe_loss = |p: &MlpParams| {
            (0..probe.len())
                .map(|k| {
                    contrastive_loss(&p.forward(probe.f(k)).unwrap(), &p.forward(probe.g(k)).unwrap(), probe.labels[k], 5.0)
                })
                .sum::<f64>()
                / probe.len() as f64
        };
        let (init, _) = train(&corpus, DescriptorKind::Hks, &TrainConfig { iterations: 0, ..config.clone() }).unwrap();
        let (trained, history) = train(&corpus, DescriptorKind::Hks, &config).unwrap();
        assert_eq!(history.losses.len(), 500);
        assert!(probe_loss(&trained) < probe_loss(&init));
        let head: f64 = history.losses[..50].iter().sum();
        let tail: f64 = history.losses[450..].iter().sum();
        assert!(tail < head, "training loss {head} → {tail}");
        let iters: Vec<usize> = history.validation.iter().map(|p| p.iteration).collect();
        assert_eq!(iters, vec![0, 100, 200, 300, 400, 500]);
    }

    #[test]
    fn deterministic() {
        let corpus = two_model_corpus();
        let config = TrainConfig { iterations: 50, ..small_config() };
        let a = train(&corpus, DescriptorKind::Hks, &config).unwrap();
        let b = train(&corpus, DescriptorKind::Hks, &config).unwrap();
        assert_eq!(a, b);
        let bits = |h: &TrainHistory| h.losses.iter().map(|l| l.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.1), bits(&b.1));
    }

    #[test]
    fn errors() {
        let corpus = two_model_corpus();
        assert!(matches!(
            train(&corpus, DescriptorKind::Wks, &small_config()),
            Err(Error::DescriptorMissing { .. })
        ));
        let single = corpus.subset(|m| m.subject == "a");
        assert!(matches!(
            train(&single, DescriptorKind::Hks, &small_config()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn config_json_roundtrip() {
        let c = TrainConfig { hidden: Some((40, 20)), ..Default::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
        let partial: TrainConfig = serde_json::from_str(r#"{"iterations": 7}"#).unwrap();
        assert_eq!(partial.iterations, 7);
        assert_eq!(partial.batch_size, 512);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
