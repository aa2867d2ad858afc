//! End-to-end acceptance checks. Runs single-threaded and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use deepspectral::corpus::{sample_labeled_pairs, Corpus, Model, PairBatch};
use deepspectral::descriptors::{
    hks, wks, DescriptorField, DescriptorKind, DescriptorParams, HksKernel, HksSchedule, WksSchedule,
};
use deepspectral::eval::{
    classification_metrics, count_matches, embed_field, matching_accuracy, metrics_from_squared,
    nearest_neighbors, raw_classification_metrics, MatchSetup, Threshold, GEODESIC_TOLERANCE,
    SAMPLE_FRACTION,
};
use deepspectral::intrinsic_dim::{estimate_intrinsic_dimension, DimConfig};
use deepspectral::laplace::{build_operators, AutoSolver, EigenSolver, LaplaceSpectrum};
use deepspectral::mesh::{primitives, TriMesh};
use deepspectral::siamese::{
    batch_gradients, contrastive_loss, init_params, squared_distance, train_with_validation,
    MlpParams, Standardization, TrainConfig,
};
use deepspectral::synth::{generate, SynthConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn spectrum(mesh: &TriMesh, m: usize) -> LaplaceSpectrum {
    AutoSolver::default()
        .solve(&build_operators(mesh), m)
        .expect("eigensolver")
}

fn test_mesh() -> TriMesh {
    primitives::bumpy_sphere(4, 0.25, 3)
}

// 1
fn sphere_spectrum() -> Outcome {
    let start = Instant::now();
    let mesh = primitives::icosphere(3);
    ensure!(mesh.vertex_count() == 642, "icosphere has {} vertices", mesh.vertex_count());
    let s = spectrum(&mesh, 17);
    let elapsed = start.elapsed().as_secs_f64();
    let exact: Vec<f64> = [(2.0, 3), (6.0, 5), (12.0, 7), (20.0, 1)]
        .iter()
        .flat_map(|&(v, count)| std::iter::repeat(v).take(count))
        .collect();
    let mut worst = 0.0f64;
    for (k, want) in exact.iter().enumerate() {
        let got = s.eigenvalues[k + 1];
        worst = worst.max((got - want).abs() / want);
    }
    ensure!(s.eigenvalues[0].abs() < 1e-8, "λ0 = {:e}", s.eigenvalues[0]);
    ensure!(worst < 0.05, "worst relative eigenvalue error {worst:.4}");
    ensure!(elapsed < 10.0, "took {elapsed:.2} s");
    Ok(format!("worst relative error {worst:.4}, {elapsed:.2} s"))
}

// 2
fn orthonormality(meshes: &[(&str, &TriMesh)]) -> Outcome {
    let mut parts = Vec::new();
    for (name, mesh) in meshes {
        let s = spectrum(mesh, 300);
        let err = s.orthonormality_error();
        ensure!(err < 1e-7, "{name}: residual {err:e}");
        parts.push(format!("{name} {err:.1e}"));
    }
    Ok(parts.join(", "))
}

// 3
fn heat_trace(s: &LaplaceSpectrum) -> Outcome {
    let schedule = HksSchedule::log_spaced(s, 100, 300).map_err(|e| e.to_string())?;
    let field = hks(s, &schedule).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (j, &t) in schedule.times.iter().enumerate() {
        let lhs: f64 = (0..field.vertex_count()).map(|x| s.mass[x] * field.row(x)[j]).sum();
        let rhs: f64 = s.eigenvalues[..300].iter().map(|l| (-l * t).exp()).sum();
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    ensure!(worst <= 1e-9, "worst relative error {worst:e}");
    Ok(format!("worst relative error {worst:.1e} over 100 times"))
}

// 4
fn isometry_invariance(mesh: &TriMesh, original: &LaplaceSpectrum) -> Outcome {
    let rotation = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(0.3, -0.8, 0.5)), 1.1);
    let moved = mesh
        .rigid_transform(&rotation, &Vector3::new(2.5, -1.0, 0.75))
        .map_err(|e| e.to_string())?;
    let s = spectrum(&moved, 300);
    let fields = |sp: &LaplaceSpectrum| -> Result<(DescriptorField, DescriptorField), String> {
        let h = hks(sp, &HksSchedule::log_spaced(sp, 100, 300).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let w = wks(sp, &WksSchedule::uniform(sp, 100, 300, 7.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        Ok((h, w))
    };
    let (ha, wa) = fields(original)?;
    let (hb, wb) = fields(&s)?;
    let rel = |a: &DescriptorField, b: &DescriptorField| {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max)
    };
    let (rh, rw) = (rel(&ha, &hb), rel(&wa, &wb));
    ensure!(rh <= 1e-6, "HKS worst relative difference {rh:e}");
    ensure!(rw <= 1e-6, "WKS worst relative difference {rw:e}");
    Ok(format!("HKS {rh:.1e}, WKS {rw:.1e}"))
}

// 5
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let (mut probes, mut coords, mut worst, mut worst_coord) = (0, 0, 0.0f64, 0.0f64);
    for seed in 0..200u64 {
        if probes >= 60 {
            break;
        }
        let d_in = rng.random_range(2..8);
        let h1 = rng.random_range(3..10);
        let h2 = rng.random_range(2..=h1);
        let d_out = rng.random_range(1..6);
        let mut params = init_params(DescriptorKind::Hks, d_in, h1, h2, d_out, seed).unwrap();
        for l in &mut params.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        params.standardization = Some(Standardization {
            mean: (0..d_in).map(|_| rng.random_range(-0.5..0.5)).collect(),
            scale: (0..d_in).map(|_| rng.random_range(0.5..2.0)).collect(),
        });
        let margin = rng.random_range(0.5..6.0);
        let mut batch = PairBatch::empty(d_in);
        for k in 0..rng.random_range(1..5) {
            let f: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g: Vec<f64> = (0..d_in).map(|_| rng.random_range(-1.5..1.5)).collect();
            let y = if k % 2 == 0 { 1.0 } else { rng.random_range(0.0..0.2) };
            batch.push(&f, &g, y, ((0, k), (1, k)));
        }
        let state = |p: &MlpParams| -> (f64, Vec<bool>, Vec<f64>) {
            let mut pattern = Vec::new();
            let mut loss = 0.0;
            let mut gaps = Vec::new();
            for k in 0..batch.len() {
                pattern.extend(p.hidden_pattern(batch.f(k)).unwrap());
                pattern.extend(p.hidden_pattern(batch.g(k)).unwrap());
                let (ef, eg) = (p.forward(batch.f(k)).unwrap(), p.forward(batch.g(k)).unwrap());
                loss += contrastive_loss(&ef, &eg, batch.labels[k], margin);
                let gap = margin - squared_distance(&ef, &eg);
                pattern.push(gap > 0.0);
                gaps.push(gap);
            }
            (loss / batch.len() as f64, pattern, gaps)
        };
        let (_, base_pattern, gaps) = state(&params);
        if gaps.iter().any(|g| g.abs() < 1e-6) {
            continue;
        }
        probes += 1;
        let (_, grads) = batch_gradients(&params, &batch, margin).map_err(|e| e.to_string())?;
        let (mut diff2, mut norm2) = (0.0, 0.0);
        for l in 0..params.layers.len() {
            let nw = params.layers[l].weights.len();
            for i in 0..nw + params.layers[l].bias.len() {
                let analytic = if i < nw { grads.weights[l][i] } else { grads.biases[l][i - nw] };
                let slot = |p: &mut MlpParams| -> *mut f64 {
                    if i < nw {
                        &mut p.layers[l].weights[i]
                    } else {
                        &mut p.layers[l].bias[i - nw]
                    }
                };
                let ptr = slot(&mut params);
                // SAFETY: `ptr` points into `params`, which outlives this block and is
                // not otherwise borrowed while it is used.
                let orig = unsafe { *ptr };
                unsafe { *ptr = orig + h };
                let (plus, pattern_p, _) = state(&params);
                unsafe { *ptr = orig - h };
                let (minus, pattern_m, _) = state(&params);
                unsafe { *ptr = orig };
                if pattern_p != base_pattern || pattern_m != base_pattern {
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * h);
                diff2 += (numeric - analytic).powi(2);
                norm2 += analytic * analytic;
                if analytic.abs() > 1e-8 {
                    worst_coord = worst_coord.max((numeric - analytic).abs() / analytic.abs());
                    coords += 1;
                }
            }
        }
        if norm2 > 0.0 {
            worst = worst.max((diff2 / norm2).sqrt());
        }
    }
    ensure!(probes >= 50, "only {probes} probes away from the kink");
    let detail = format!(
        "{probes} probes, worst per-probe relative error {worst:.1e} (worst single coordinate of {coords} with |g| > 1e-8: {worst_coord:.1e})"
    );
    ensure!(worst < 1e-5, "{detail}");
    Ok(detail)
}

// 6
fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let e: Vec<f64> = (0..15).map(|_| rng.random_range(-10.0..10.0)).collect();
        ensure!(contrastive_loss(&e, &e, 1.0, 5.0) == 0.0, "matching pair at zero distance");
        ensure!(contrastive_loss(&e, &e, 0.0, 5.0) == 5.0, "non-matching pair at zero distance");
        let dir: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = squared_distance(&dir, &vec![0.0; 15]).sqrt();
        let far: Vec<f64> = e.iter().zip(&dir).map(|(a, d)| a + d / norm * rng.random_range(2.3..20.0)).collect();
        if squared_distance(&e, &far) > 5.0 {
            ensure!(contrastive_loss(&e, &far, 0.0, 5.0) == 0.0, "non-matching pair beyond margin");
        }
    }
    Ok("1000 random embeddings".into())
}

// 7
fn intrinsic_dimension() -> Outcome {
    let (count, rank, ambient) = (10_000, 5, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let basis: Vec<f64> = (0..ambient * rank).map(|_| StandardNormal.sample(&mut rng)).collect();
    let samples: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let z: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..ambient)
                .map(|i| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (0..rank).map(|j| basis[i * rank + j] * z[j]).sum::<f64>() + 1e-6 * noise
                })
                .collect()
        })
        .collect();
    let mut found = Vec::new();
    for k in [6, 10, 15, 20, 25] {
        let config = DimConfig {
            k_neighbors: k,
            ..Default::default()
        };
        let report = estimate_intrinsic_dimension(&samples, &config).map_err(|e| e.to_string())?;
        found.push(report.summary);
        ensure!(report.summary == 5, "k = {k}: summary {} ({:?})", report.summary, report.histogram());
    }
    Ok(format!("summaries {found:?} for k = 6, 10, 15, 20, 25"))
}

// 8
fn err_identity(history_sets: &[deepspectral::eval::ClassificationMetrics]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for trial in 0..200 {
        let len = rng.random_range(1..300);
        let squared: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..8.0)).collect();
        let labels: Vec<f64> = (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let threshold = Threshold::half_margin(5.0, trial % 2 == 1);
        let m = metrics_from_squared(&squared, &labels, 5.0, threshold).map_err(|e| e.to_string())?;
        ensure!(m.err == m.tnr + m.fpr, "trial {trial}: {m:?}");
        checked += 1;
    }
    let mesh = primitives::icosphere(2);
    let n = mesh.vertex_count();
    let mut models = Vec::new();
    for i in 0..3 {
        let values: Vec<f64> = (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = DescriptorField::new(
            DescriptorKind::Hks,
            DescriptorParams::Hks { k_modes: 6, times: (1..=6).map(f64::from).collect() },
            n,
            6,
            values,
        )
        .unwrap();
        let mut m = Model::new(format!("s{i}"), "p0", mesh.clone());
        m.descriptors.insert(DescriptorKind::Hks, field);
        models.push(m);
    }
    let corpus = Corpus::new(models).map_err(|e| e.to_string())?;
    for seed in 0..20 {
        let pairs = sample_labeled_pairs(&corpus, DescriptorKind::Hks, 500, 100, &mut rng).map_err(|e| e.to_string())?;
        let params = init_params(DescriptorKind::Hks, 6, 8, 4, 15, seed).unwrap();
        for m in [
            classification_metrics(&params, &pairs, 5.0, Threshold::half_margin(5.0, false)),
            raw_classification_metrics(&pairs, 5.0, Threshold::half_margin(5.0, true)),
        ] {
            let m = m.map_err(|e| e.to_string())?;
            ensure!(m.err == m.tnr + m.fpr, "pair set {seed}: {m:?}");
            checked += 1;
        }
    }
    for m in history_sets {
        ensure!(m.err == m.tnr + m.fpr, "training checkpoint: {m:?}");
        checked += 1;
    }
    Ok(format!("{checked} pair sets"))
}

// 9
fn nearest_neighbor_oracle(real: &DescriptorField) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fields = Vec::new();
    for (rows, dim, levels) in [(1000, 3, 3), (1000, 5, 2), (700, 8, 4), (1000, 15, 1_000_000)] {
        let make = |rng: &mut ChaCha8Rng| {
            let values = (0..rows * dim).map(|_| rng.random_range(0..levels) as f64).collect();
            DescriptorField::new(
                DescriptorKind::Embedded,
                DescriptorParams::Embedded { source: DescriptorKind::Hks },
                rows,
                dim,
                values,
            )
            .unwrap()
        };
        fields.push((make(&mut rng), make(&mut rng)));
    }
    fields.push((real.clone(), real.clone()));
    let mut ties = 0;
    for (source, target) in &fields {
        let got = nearest_neighbors(source, target).map_err(|e| e.to_string())?;
        for (s, m) in got.iter().enumerate() {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut tied = 0;
            for t in 0..target.vertex_count() {
                let mut d = 0.0;
                for c in 0..source.dim() {
                    let diff = source.row(s)[c] - target.row(t)[c];
                    d += diff * diff;
                }
                if d < best.1 {
                    best = (t, d);
                    tied = 0;
                } else if d == best.1 {
                    tied += 1;
                }
            }
            ties += usize::from(tied > 0);
            ensure!((m.source, m.target, m.squared_distance) == (s, best.0, best.1), "source {s}: {m:?} vs {best:?}");
        }
    }
    ensure!(ties > 0, "no ties exercised");
    Ok(format!("{} field pairs, {ties} queries with tied minima", fields.len()))
}

// 10, 8 (checkpoints), 11
struct Synthetic {
    corpus: Corpus,
    descriptor_seconds: f64,
}

fn synthetic_corpus() -> Synthetic {
    let start = Instant::now();
    let config = SynthConfig {
        subjects: 6,
        poses: 5,
        held_out_subjects: 2,
        ..Default::default()
    };
    let models = generate(&config)
        .expect("synthetic corpus")
        .into_iter()
        .map(|m| Model::new(m.subject, m.pose, m.mesh))
        .collect();
    let mut corpus = Corpus::new(models).expect("valid corpus");
    corpus
        .compute_descriptors(&[&HksKernel::default()], &AutoSolver::default(), None)
        .expect("descriptors");
    Synthetic {
        corpus,
        descriptor_seconds: start.elapsed().as_secs_f64(),
    }
}

fn desk_scale_config() -> TrainConfig {
    TrainConfig {
        batch_size: 128,
        iterations: 2000,
        ..Default::default()
    }
}

fn end_to_end(data: &Synthetic, checkpoints: &mut Vec<deepspectral::eval::ClassificationMetrics>) -> Outcome {
    let corpus = &data.corpus;
    let train = corpus.subset(|m| m.subject.starts_with('s'));
    let held = corpus.subset(|m| m.subject.starts_with('h'));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let validation = sample_labeled_pairs(&held, DescriptorKind::Hks, 2048, 512, &mut rng).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (params, history) =
        train_with_validation(&train, DescriptorKind::Hks, &desk_scale_config(), Some(&validation)).map_err(|e| e.to_string())?;
    let train_seconds = start.elapsed().as_secs_f64();
    checkpoints.extend(history.validation.iter().map(|p| p.metrics));

    let n = corpus.vertex_count();
    let truth: Vec<usize> = (0..n).collect();
    let (mut raw_total, mut deep_total) = (0, 0);
    let mut per_pair = Vec::new();
    for i in 0..5 {
        let a = corpus.model(corpus.find("h0", &format!("p{i}")).unwrap());
        let b = corpus.model(corpus.find("h1", &format!("p{}", (i + 1) % 5)).unwrap());
        let fa = a.descriptor(DescriptorKind::Hks).unwrap();
        let fb = b.descriptor(DescriptorKind::Hks).unwrap();
        let ea = embed_field(&params, fa).map_err(|e| e.to_string())?;
        let eb = embed_field(&params, fb).map_err(|e| e.to_string())?;
        let count = |s: &DescriptorField, t: &DescriptorField| {
            count_matches(&MatchSetup {
                source: s,
                target: t,
                target_mesh: &b.mesh,
                ground_truth: &truth,
                mask: None,
                threshold: Threshold::half_margin(5.0, false),
                tolerance_fraction: GEODESIC_TOLERANCE,
            })
            .map(|r| r.correct)
            .map_err(|e| e.to_string())
        };
        let (raw, deep) = (count(fa, fb)?, count(&ea, &eb)?);
        per_pair.push(format!("{raw}→{deep}"));
        raw_total += raw;
        deep_total += deep;
    }
    let first = history.validation.first().unwrap().metrics;
    let last = history.validation.last().unwrap().metrics;
    let summary = format!(
        "correct matches raw {raw_total} vs learned {deep_total} (per pair {}), held-out ERR {:.4} → {:.4}, descriptors {:.0} s, training {:.0} s",
        per_pair.join(" "),
        first.err,
        last.err,
        data.descriptor_seconds,
        train_seconds
    );
    ensure!(deep_total as f64 >= 1.5 * raw_total as f64 && deep_total > raw_total, "{summary}");
    ensure!(last.err < first.err, "{summary}");
    ensure!(train_seconds < 600.0, "{summary}");
    Ok(summary)
}

fn determinism(data: &Synthetic) -> Outcome {
    let train = data.corpus.subset(|m| m.subject.starts_with('s'));
    let config = TrainConfig {
        iterations: 200,
        ..desk_scale_config()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for run in 0..2 {
        let (params, _) = train_with_validation(&train, DescriptorKind::Hks, &config, None).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("run{run}.smn"));
        params.save(&path).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure!(bytes[0] == bytes[1], "model files differ");
    Ok(format!("two runs, {} identical bytes", bytes[0].len()))
}

// 12
fn self_matching(mesh: &TriMesh, s: &LaplaceSpectrum) -> Outcome {
    let field = hks(s, &HksSchedule::log_spaced(s, 100, 300).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let truth: Vec<usize> = (0..mesh.vertex_count()).collect();
    let setup = MatchSetup {
        source: &field,
        target: &field,
        target_mesh: mesh,
        ground_truth: &truth,
        mask: None,
        threshold: Threshold::half_margin(5.0, false),
        tolerance_fraction: GEODESIC_TOLERANCE,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sampled = matching_accuracy(&setup, SAMPLE_FRACTION, &mut rng).map_err(|e| e.to_string())?;
    let all = count_matches(&setup).map_err(|e| e.to_string())?;
    ensure!(sampled.matching_accuracy == 1.0, "sampled accuracy {}", sampled.matching_accuracy);
    ensure!(all.matching_accuracy == 1.0, "all-vertex accuracy {}", all.matching_accuracy);
    Ok(format!("accuracy 1.0 on {} sampled and {} total vertices", sampled.queried, all.queried))
}

fn run(id: usize, name: &str, results: &mut Vec<bool>, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1} s]"),
        Err(detail) => println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1} s]"),
    }
    results.push(outcome.is_ok());
}

fn main() {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .expect("single-threaded pool");
    let mut results = Vec::new();

    let mesh = test_mesh();
    let base = spectrum(&mesh, 300);

    run(1, "sphere spectrum", &mut results, sphere_spectrum);
    run(2, "mass orthonormality", &mut results, || {
        let sphere3 = primitives::icosphere(3);
        let sphere4 = primitives::icosphere(4);
        let synth = generate(&SynthConfig {
            subjects: 1,
            poses: 2,
            ..Default::default()
        })
        .unwrap();
        orthonormality(&[
            ("icosphere(3)", &sphere3),
            ("icosphere(4)", &sphere4),
            ("bumpy sphere", &mesh),
            ("synthetic posed body", &synth[1].mesh),
        ])
    });
    run(3, "heat trace identity", &mut results, || heat_trace(&base));
    run(4, "rigid motion invariance", &mut results, || isometry_invariance(&mesh, &base));
    run(5, "gradient check", &mut results, gradient_check);
    run(6, "loss identities", &mut results, loss_identities);
    run(7, "intrinsic dimension oracle", &mut results, intrinsic_dimension);

    let real_field = {
        let s = spectrum(&primitives::icosphere(3), 300);
        hks(&s, &HksSchedule::log_spaced(&s, 100, 300).unwrap()).unwrap()
    };
    run(9, "nearest-neighbour oracle", &mut results, || nearest_neighbor_oracle(&real_field));

    let data = catch_unwind(synthetic_corpus).ok();
    let mut checkpoints = Vec::new();
    run(10, "learned vs raw HKS on held-out subjects", &mut results, || match &data {
        Some(d) => end_to_end(d, &mut checkpoints),
        None => Err("synthetic corpus could not be built".into()),
    });
    run(8, "ERR = TNR + FPR", &mut results, || err_identity(&checkpoints));
    run(11, "training determinism", &mut results, || match &data {
        Some(d) => determinism(d),
        None => Err("synthetic corpus could not be built".into()),
    });
    run(12, "self-matching with raw HKS", &mut results, || self_matching(&mesh, &base));

    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
