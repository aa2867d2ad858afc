use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use deepspectral::corpus::{build_corpus, parse_mask, sample_labeled_pairs, sidecar_path, spectrum_cache_path, Corpus};
use deepspectral::descriptors::{DescriptorField, DescriptorKind};
use deepspectral::eval::{
    classification_metrics, count_matches, embed_field, matching_accuracy, raw_classification_metrics,
    visualization_obj, ClassificationMetrics, MatchSetup, Threshold,
};
use deepspectral::intrinsic_dim::{estimate_intrinsic_dimension, sample_descriptor_rows, DimConfig};
use deepspectral::laplace::{build_operators, EigenSolver, LaplaceSpectrum, SolverRegistry};
use deepspectral::mesh::{load_mesh, TriMesh};
use deepspectral::siamese::{train_with_validation, MlpParams};
use deepspectral::synth::{generate, write_corpus};

use crate::config::{ModeName, RunConfig};
use crate::Coded;

/// RNG stream for sampled evaluation pairs and matching queries.
const STREAM_EVAL: u64 = 16;
/// RNG stream for intrinsic-dimension row sampling.
const STREAM_ROWS: u64 = 17;

/// Resolved global options shared by every command.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Context {
    /// Places a relative output path under the output directory.
    pub fn output(&self, path: &Path) -> Result<PathBuf> {
        let resolved = match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        };
        if let Some(parent) = resolved.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        Ok(resolved)
    }

    /// Default output next to an input file, or in the output directory
    /// when one is set.
    pub fn beside(&self, default: PathBuf) -> Result<PathBuf> {
        match &self.out_dir {
            Some(_) => self.output(Path::new(default.file_name().expect("input path has a file name"))),
            None => Ok(default),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Fails with `MissingFile` unless every path exists.
pub fn require<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(deepspectral::Error::MissingFile(p.to_path_buf()).into());
        }
    }
    Ok(())
}

fn solver<'a>(registry: &'a SolverRegistry, name: &str) -> Result<&'a dyn EigenSolver> {
    Ok(registry.get(name)?)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn spectrum_for(mesh: &TriMesh, solver: &dyn EigenSolver, modes: usize, cache: Option<&Path>) -> Result<LaplaceSpectrum> {
    let path = cache.map(|d| spectrum_cache_path(d, mesh, solver, modes));
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        log::info!("reusing spectrum {}", p.display());
        return Ok(LaplaceSpectrum::load(p)?);
    }
    let spectrum = solver.solve(&build_operators(mesh), modes)?;
    if let Some(p) = path {
        std::fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
        spectrum.save(&p)?;
    }
    Ok(spectrum)
}

/// Descriptor field of `kind` for a mesh: the given file, else the sidecar
/// next to the mesh, else computed from scratch.
fn field_for(ctx: &Context, mesh_path: &Path, mesh: &TriMesh, kind: DescriptorKind, file: Option<&Path>) -> Result<DescriptorField> {
    if let Some(f) = file {
        return Ok(DescriptorField::load(f)?);
    }
    let side = sidecar_path(mesh_path, kind);
    if side.exists() {
        return Ok(DescriptorField::load(&side)?);
    }
    log::info!("{}: no {kind} descriptors on disk, computing", mesh_path.display());
    let section = &ctx.config.descriptors;
    let kernel = section.kernel(kind)?;
    let registry = SolverRegistry::with_defaults();
    let spectrum = spectrum_for(mesh, solver(&registry, &section.solver)?, kernel.required_modes(), section.cache_dir.as_deref())?;
    Ok(kernel.compute(&spectrum)?)
}

fn load_corpus(ctx: &Context, manifest: &Path, root: Option<&Path>, mask: Option<&Path>, kind: DescriptorKind) -> Result<Corpus> {
    require([manifest])?;
    require(mask)?;
    let root = root
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut corpus = build_corpus(&root, manifest, mask)?;
    if corpus.models_with(kind).len() < corpus.len() {
        let section = &ctx.config.descriptors;
        let registry = SolverRegistry::with_defaults();
        let kernel = section.kernel(kind)?;
        log::info!("computing missing {kind} descriptors");
        corpus.compute_descriptors(&[kernel.as_ref()], solver(&registry, &section.solver)?, section.cache_dir.as_deref())?;
    }
    Ok(corpus)
}

pub struct DescriptorsArgs {
    pub meshes: Vec<PathBuf>,
    pub kind: DescriptorKind,
}

pub fn descriptors(ctx: &Context, args: &DescriptorsArgs) -> Result<()> {
    require(args.meshes.iter().map(PathBuf::as_path))?;
    let section = &ctx.config.descriptors;
    let kernel = section.kernel(args.kind)?;
    let registry = SolverRegistry::with_defaults();
    let solver = solver(&registry, &section.solver)?;
    for path in &args.meshes {
        let mesh = load_mesh(path, None)?;
        let spectrum = spectrum_for(&mesh, solver, kernel.required_modes(), section.cache_dir.as_deref())?;
        let field = kernel.compute(&spectrum)?;
        let out = ctx.beside(sidecar_path(path, args.kind))?;
        field.save(&out)?;
        println!("{} {}x{}", out.display(), field.vertex_count(), field.dim());
    }
    Ok(())
}

pub struct SpectrumArgs {
    pub mesh: PathBuf,
    pub modes: usize,
    pub out: Option<PathBuf>,
    pub eigenvalues_csv: Option<PathBuf>,
}

pub fn spectrum(ctx: &Context, args: &SpectrumArgs) -> Result<()> {
    require([args.mesh.as_path()])?;
    let mesh = load_mesh(&args.mesh, None)?;
    let registry = SolverRegistry::with_defaults();
    let section = &ctx.config.descriptors;
    let s = spectrum_for(&mesh, solver(&registry, &section.solver)?, args.modes, section.cache_dir.as_deref())?;
    let out = match &args.out {
        Some(p) => ctx.output(p)?,
        None => ctx.beside(args.mesh.with_extension("lbs"))?,
    };
    s.save(&out)?;
    if let Some(csv) = &args.eigenvalues_csv {
        let mut w = BufWriter::new(File::create(ctx.output(csv)?)?);
        writeln!(w, "index,eigenvalue")?;
        for (i, l) in s.eigenvalues.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()?;
    }
    println!(
        "{} modes {} largest eigenvalue {} orthonormality error {:e}",
        out.display(),
        s.mode_count(),
        s.eigenvalues.last().copied().unwrap_or(0.0),
        s.orthonormality_error()
    );
    Ok(())
}

pub struct IntrinsicDimArgs {
    pub fields: Vec<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct DimSummary {
    summary: usize,
    trials: usize,
    k_neighbors: usize,
    variance_threshold: f64,
    samples: usize,
    histogram: Vec<usize>,
}

pub fn intrinsic_dim(ctx: &Context, args: &IntrinsicDimArgs) -> Result<()> {
    require(args.fields.iter().map(PathBuf::as_path))?;
    let fields = args
        .fields
        .iter()
        .map(|p| DescriptorField::load(p).with_context(|| p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let section = &ctx.config.intrinsic_dim;
    let rows = sample_descriptor_rows(&fields, section.samples, &mut ctx.rng(STREAM_ROWS))?;
    let report = estimate_intrinsic_dimension(
        &rows,
        &DimConfig {
            k_neighbors: section.k_neighbors,
            variance_threshold: section.variance_threshold,
            trials: section.trials,
            seed: ctx.seed,
        },
    )?;
    if let Some(csv) = &args.csv {
        let mut w = BufWriter::new(File::create(ctx.output(csv)?)?);
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    write_json(
        &DimSummary {
            summary: report.summary,
            trials: report.trials,
            k_neighbors: report.k_neighbors,
            variance_threshold: report.variance_threshold,
            samples: rows.len(),
            histogram: report.histogram(),
        },
        None,
    )
}

pub struct TrainArgs {
    pub manifest: PathBuf,
    pub root: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub kind: DescriptorKind,
    pub validation_manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub loss_csv: Option<PathBuf>,
    pub validation_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: String,
    kind: DescriptorKind,
    layer_dims: Vec<usize>,
    iterations: usize,
    final_loss: Option<f64>,
    validation: Option<&'a ClassificationMetrics>,
}

pub fn train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    require(args.validation_manifest.as_deref())?;
    let config = &ctx.config.train;
    config.validate()?;
    let corpus = load_corpus(ctx, &args.manifest, args.root.as_deref(), args.mask.as_deref(), args.kind)?;
    let validation = match &args.validation_manifest {
        Some(m) => {
            let held = load_corpus(ctx, m, args.root.as_deref(), None, args.kind)?;
            let chunk = config.batch_size.min(512) & !1;
            Some(sample_labeled_pairs(&held, args.kind, config.validation_pairs, chunk.max(2), &mut ctx.rng(STREAM_EVAL))?)
        }
        None => None,
    };
    let (params, history) = train_with_validation(&corpus, args.kind, config, validation.as_ref())?;
    let out = ctx.output(&args.out)?;
    params.save(&out)?;
    let loss_path = match &args.loss_csv {
        Some(p) => ctx.output(p)?,
        None => out.with_extension("loss.csv"),
    };
    let mut w = BufWriter::new(File::create(&loss_path)?);
    history.write_loss_csv(&mut w)?;
    w.flush()?;
    let validation_path = match &args.validation_csv {
        Some(p) => ctx.output(p)?,
        None => out.with_extension("validation.csv"),
    };
    let mut w = BufWriter::new(File::create(&validation_path)?);
    history.write_validation_csv(&mut w)?;
    w.flush()?;
    write_json(
        &TrainSummary {
            model: out.display().to_string(),
            kind: args.kind,
            layer_dims: params.layer_dims(),
            iterations: config.iterations,
            final_loss: history.losses.last().copied(),
            validation: history.validation.last().map(|p| &p.metrics),
        },
        None,
    )
}

pub struct EmbedArgs {
    pub model: PathBuf,
    pub fields: Vec<PathBuf>,
}

pub fn embed(ctx: &Context, args: &EmbedArgs) -> Result<()> {
    require([args.model.as_path()])?;
    require(args.fields.iter().map(PathBuf::as_path))?;
    let params = MlpParams::load(&args.model)?;
    for path in &args.fields {
        let field = DescriptorField::load(path)?;
        let embedded = embed_field(&params, &field)?;
        let out = ctx.beside(path.with_extension("emb.dsc"))?;
        embedded.save(&out)?;
        println!("{} {}x{}", out.display(), embedded.vertex_count(), embedded.dim());
    }
    Ok(())
}

pub struct MatchArgs {
    pub model: Option<PathBuf>,
    pub kind: DescriptorKind,
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_desc: Option<PathBuf>,
    pub target_desc: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub export_vis: Option<PathBuf>,
}

pub fn matching(ctx: &Context, args: &MatchArgs) -> Result<()> {
    require([args.source.as_path(), args.target.as_path()])?;
    require(args.model.as_deref())?;
    require(args.source_desc.as_deref())?;
    require(args.target_desc.as_deref())?;
    require(args.ground_truth.as_deref())?;
    require(args.mask.as_deref())?;
    let section = &ctx.config.matching;
    let params = args.model.as_deref().map(MlpParams::load).transpose()?;
    let kind = match &params {
        Some(p) => match p.kind {
            DescriptorKind::Embedded => args.kind,
            k => k,
        },
        None => args.kind,
    };
    let source_mesh = load_mesh(&args.source, None)?;
    let target_mesh = load_mesh(&args.target, None)?;
    let mut source = field_for(ctx, &args.source, &source_mesh, kind, args.source_desc.as_deref())?;
    let mut target = field_for(ctx, &args.target, &target_mesh, kind, args.target_desc.as_deref())?;
    if let Some(p) = &params {
        source = embed_field(p, &source)?;
        target = embed_field(p, &target)?;
    }
    let n = source.vertex_count();
    let truth = match &args.ground_truth {
        Some(p) => parse_mask(&std::fs::read_to_string(p)?)?,
        None => (0..n).collect(),
    };
    let mask = match &args.mask {
        Some(p) => {
            let mut m = vec![false; n];
            for v in parse_mask(&std::fs::read_to_string(p)?)? {
                if v >= n {
                    return Err(deepspectral::Error::VertexOutOfRange { index: v, vertex_count: n }.into());
                }
                m[v] = true;
            }
            Some(m)
        }
        None => None,
    };
    let setup = MatchSetup {
        source: &source,
        target: &target,
        target_mesh: &target_mesh,
        ground_truth: &truth,
        mask: mask.as_deref(),
        threshold: Threshold::half_margin(section.margin, section.threshold_on_distance),
        tolerance_fraction: section.tolerance,
    };
    let report = match section.mode {
        ModeName::Count => count_matches(&setup)?,
        ModeName::Accuracy => matching_accuracy(&setup, section.fraction, &mut ctx.rng(STREAM_EVAL))?,
    };
    if let Some(vis) = &args.export_vis {
        std::fs::write(ctx.output(vis)?, visualization_obj(&source_mesh, &target_mesh, &report))?;
    }
    let out = args.out.as_deref().map(|p| ctx.output(p)).transpose()?;
    if out.is_some() {
        eprintln!(
            "queried {} accepted {} correct {} accuracy {:.4}",
            report.queried, report.accepted, report.correct, report.matching_accuracy
        );
    }
    write_json(&report, out.as_deref())
}

pub struct EvalArgs {
    pub model: Option<PathBuf>,
    pub kind: DescriptorKind,
    pub manifest: PathBuf,
    pub root: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    require(args.model.as_deref())?;
    let section = &ctx.config.eval;
    let params = args.model.as_deref().map(MlpParams::load).transpose()?;
    let kind = params.as_ref().map_or(args.kind, |p| p.kind);
    let corpus = load_corpus(ctx, &args.manifest, args.root.as_deref(), args.mask.as_deref(), kind)?;
    if section.chunk == 0 || section.chunk % 2 != 0 {
        return Err(Coded::new("InvalidConfig", format!("chunk {} must be even and positive", section.chunk)).into());
    }
    let pairs = sample_labeled_pairs(&corpus, kind, section.pairs, section.chunk, &mut ctx.rng(STREAM_EVAL))?;
    let threshold = Threshold::half_margin(section.margin, section.threshold_on_distance);
    let metrics = match &params {
        Some(p) => classification_metrics(p, &pairs, section.margin, threshold)?,
        None => raw_classification_metrics(&pairs, section.margin, threshold)?,
    };
    if let Some(csv) = &args.csv {
        let mut w = BufWriter::new(File::create(ctx.output(csv)?)?);
        writeln!(w, "lss,tnr,fpr,err")?;
        writeln!(w, "{},{},{},{}", metrics.lss, metrics.tnr, metrics.fpr, metrics.err)?;
        w.flush()?;
    }
    write_json(&metrics, None)
}

pub struct SynthArgs {
    pub out: PathBuf,
}

pub fn synth_corpus(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let config = &ctx.config.synth;
    config.validate()?;
    let models = generate(config)?;
    let dir = ctx.output(&args.out)?;
    let files = write_corpus(&dir, &models)?;
    std::fs::write(dir.join("synth_config.json"), serde_json::to_string_pretty(config)? + "\n")?;
    println!("{} meshes, {} vertices each", models.len(), models[0].mesh.vertex_count());
    println!("{}", files.manifest.display());
    println!("{}", files.train_manifest.display());
    println!("{}", files.held_out_manifest.display());
    Ok(())
}
