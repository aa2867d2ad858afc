//! Registered mesh corpora and contrastive pair sampling.
//!
//! All models in a corpus share one vertex count, and vertex `i` of one
//! model corresponds to vertex `i` of every other model.

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::descriptors::{DescriptorField, DescriptorKernel, DescriptorKind};
use crate::error::{Error, Result};
use crate::laplace::{build_operators, EigenSolver};
use crate::mesh::{load_mesh, TriMesh};

pub use manifest::{parse_manifest, parse_mask, ManifestEntry};

/// Upper end of the soft label drawn for non-matching training pairs.
pub const SOFT_LABEL_MAX: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Model {
    pub subject: String,
    pub pose: String,
    /// Where the mesh was loaded from, if anywhere.
    pub path: Option<PathBuf>,
    pub mesh: TriMesh,
    pub descriptors: BTreeMap<DescriptorKind, DescriptorField>,
}

impl Model {
    pub fn new(subject: impl Into<String>, pose: impl Into<String>, mesh: TriMesh) -> Self {
        Self {
            subject: subject.into(),
            pose: pose.into(),
            path: None,
            mesh,
            descriptors: BTreeMap::new(),
        }
    }

    /// `subject/pose`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.subject, self.pose)
    }

    pub fn descriptor(&self, kind: DescriptorKind) -> Result<&DescriptorField> {
        self.descriptors.get(&kind).ok_or_else(|| Error::DescriptorMissing {
            model: self.id(),
            kind: kind.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    models: Vec<Model>,
    vertex_count: usize,
    /// `true` marks vertices excluded from evaluation.
    rigid_mask: Option<Vec<bool>>,
}

impl Corpus {
    pub fn new(models: Vec<Model>) -> Result<Self> {
        let vertex_count = models.first().map_or(0, |m| m.mesh.vertex_count());
        let mut seen = std::collections::HashSet::new();
        for m in &models {
            if m.mesh.vertex_count() != vertex_count {
                return Err(Error::VertexCountMismatch {
                    model: m.id(),
                    expected: vertex_count,
                    actual: m.mesh.vertex_count(),
                });
            }
            if !seen.insert((m.subject.clone(), m.pose.clone())) {
                return Err(Error::InvalidConfig(format!("duplicate model id {}", m.id())));
            }
        }
        let corpus = Self {
            models,
            vertex_count,
            rigid_mask: None,
        };
        for m in &corpus.models {
            for field in m.descriptors.values() {
                corpus.check_field(m, field)?;
            }
        }
        Ok(corpus)
    }

    pub fn models(&self) -> &[Model] {
        &self.models
    }

    pub fn model(&self, index: usize) -> &Model {
        &self.models[index]
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn rigid_mask(&self) -> Option<&[bool]> {
        self.rigid_mask.as_deref()
    }

    pub fn set_rigid_mask(&mut self, masked: &[usize]) -> Result<()> {
        let mut mask = vec![false; self.vertex_count];
        for &v in masked {
            if v >= self.vertex_count {
                return Err(Error::VertexOutOfRange {
                    index: v,
                    vertex_count: self.vertex_count,
                });
            }
            mask[v] = true;
        }
        self.rigid_mask = Some(mask);
        Ok(())
    }

    pub fn find(&self, subject: &str, pose: &str) -> Option<usize> {
        self.models
            .iter()
            .position(|m| m.subject == subject && m.pose == pose)
    }

    /// Models carrying a field of `kind`; the rest are skipped by sampling.
    pub fn models_with(&self, kind: DescriptorKind) -> Vec<usize> {
        (0..self.models.len())
            .filter(|&i| self.models[i].descriptors.contains_key(&kind))
            .collect()
    }

    /// Keeps the models that satisfy `keep`.
    pub fn subset(&self, keep: impl Fn(&Model) -> bool) -> Self {
        Self {
            models: self.models.iter().filter(|m| keep(m)).cloned().collect(),
            vertex_count: self.vertex_count,
            rigid_mask: self.rigid_mask.clone(),
        }
    }

    pub fn attach(&mut self, index: usize, field: DescriptorField) -> Result<()> {
        self.check_field(&self.models[index], &field)?;
        self.models[index].descriptors.insert(field.kind, field);
        Ok(())
    }

    fn check_field(&self, model: &Model, field: &DescriptorField) -> Result<()> {
        if field.vertex_count() != self.vertex_count {
            return Err(Error::VertexCountMismatch {
                model: model.id(),
                expected: self.vertex_count,
                actual: field.vertex_count(),
            });
        }
        let other = self
            .models
            .iter()
            .filter_map(|m| m.descriptors.get(&field.kind))
            .map(|f| f.dim())
            .next();
        match other {
            Some(d) if d != field.dim() => Err(Error::DimensionMismatch {
                expected: d,
                actual: field.dim(),
            }),
            _ => Ok(()),
        }
    }

    /// Computes the kernels' fields for every model that lacks them.
    ///
    /// One spectrum per model serves all kernels. With `cache_dir`, fields
    /// are stored under a SHA-256 of the mesh geometry, kernel config and
    /// solver name, and reused on later calls.
    pub fn compute_descriptors(
        &mut self,
        kernels: &[&dyn DescriptorKernel],
        solver: &dyn EigenSolver,
        cache_dir: Option<&Path>,
    ) -> Result<()> {
        if let Some(dir) = cache_dir {
            std::fs::create_dir_all(dir)?;
        }
        let computed: Vec<Result<Vec<DescriptorField>>> = self
            .models
            .par_iter()
            .map(|model| {
                let missing: Vec<&dyn DescriptorKernel> = kernels
                    .iter()
                    .copied()
                    .filter(|k| !model.descriptors.contains_key(&k.kind()))
                    .collect();
                let mut fields = Vec::new();
                let mut todo = Vec::new();
                for kernel in missing {
                    let path = cache_dir.map(|d| cache_path(d, &model.mesh, kernel, solver));
                    match &path {
                        Some(p) if p.exists() => fields.push(DescriptorField::load(p)?),
                        _ => todo.push((kernel, path)),
                    }
                }
                if !todo.is_empty() {
                    let modes = todo.iter().map(|(k, _)| k.required_modes()).max().unwrap_or(0);
                    log::info!("{}: solving for {modes} eigenpairs", model.id());
                    let spectrum = solver.solve(&build_operators(&model.mesh), modes)?;
                    for (kernel, path) in todo {
                        let field = kernel.compute(&spectrum.truncated(kernel.required_modes()))?;
                        if let Some(p) = path {
                            field.save(&p)?;
                        }
                        fields.push(field);
                    }
                }
                Ok(fields)
            })
            .collect();
        for (index, fields) in computed.into_iter().enumerate() {
            for field in fields? {
                self.attach(index, field)?;
            }
        }
        Ok(())
    }
}

/// Cache file name: hex SHA-256 over geometry, kernel config and solver.
pub fn cache_path(
    dir: &Path,
    mesh: &TriMesh,
    kernel: &dyn DescriptorKernel,
    solver: &dyn EigenSolver,
) -> PathBuf {
    let mut hasher = Sha256::new();
    hasher.update(mesh.content_bytes());
    hasher.update(kernel.config_key().as_bytes());
    hasher.update(b"|");
    hasher.update(solver.name().as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}.{}.dsc", kernel.kind()))
}

/// Spectrum cache file name: hex SHA-256 over geometry, solver and mode
/// count.
pub fn spectrum_cache_path(dir: &Path, mesh: &TriMesh, solver: &dyn EigenSolver, modes: usize) -> PathBuf {
    let mut hasher = Sha256::new();
    hasher.update(mesh.content_bytes());
    hasher.update(format!("|{}|{modes}", solver.name()).as_bytes());
    let hex: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}.lbs"))
}

/// Descriptor file stored next to a mesh: `body.off` → `body.hks.dsc`.
pub fn sidecar_path(mesh_path: &Path, kind: DescriptorKind) -> PathBuf {
    mesh_path.with_extension(format!("{kind}.dsc"))
}

/// Loads every mesh listed in `manifest` (paths relative to `root`),
/// attaching sidecar descriptor files found next to them, and the rigid
/// mask from `mask`, if given.
pub fn build_corpus(root: &Path, manifest: &Path, mask: Option<&Path>) -> Result<Corpus> {
    if !manifest.exists() {
        return Err(Error::MissingFile(manifest.to_path_buf()));
    }
    let entries = parse_manifest(&std::fs::read_to_string(manifest)?)?;
    let models = entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.path);
            let mesh = load_mesh(&path, None)?;
            let mut model = Model::new(e.subject.clone(), e.pose.clone(), mesh);
            for kind in [DescriptorKind::Gps, DescriptorKind::Hks, DescriptorKind::Wks] {
                let side = sidecar_path(&path, kind);
                if side.exists() {
                    model.descriptors.insert(kind, DescriptorField::load(&side)?);
                }
            }
            model.path = Some(path);
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = Corpus::new(models)?;
    if let Some(mask) = mask {
        if !mask.exists() {
            return Err(Error::MissingFile(mask.to_path_buf()));
        }
        corpus.set_rigid_mask(&parse_mask(&std::fs::read_to_string(mask)?)?)?;
    }
    Ok(corpus)
}

/// Descriptor pairs with labels; side `f` and side `g` rows are row-major
/// `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub dim: usize,
    pub rows_f: Vec<f64>,
    pub rows_g: Vec<f64>,
    pub labels: Vec<f64>,
    /// `((model, vertex), (model, vertex))` for sides `f` and `g`.
    pub provenance: Vec<((usize, usize), (usize, usize))>,
}

impl PairBatch {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            rows_f: Vec::new(),
            rows_g: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn f(&self, k: usize) -> &[f64] {
        &self.rows_f[k * self.dim..(k + 1) * self.dim]
    }

    pub fn g(&self, k: usize) -> &[f64] {
        &self.rows_g[k * self.dim..(k + 1) * self.dim]
    }

    pub fn push(&mut self, f: &[f64], g: &[f64], label: f64, provenance: ((usize, usize), (usize, usize))) {
        self.rows_f.extend_from_slice(f);
        self.rows_g.extend_from_slice(g);
        self.labels.push(label);
        self.provenance.push(provenance);
    }

    pub fn extend(&mut self, other: &PairBatch) {
        self.rows_f.extend_from_slice(&other.rows_f);
        self.rows_g.extend_from_slice(&other.rows_g);
        self.labels.extend_from_slice(&other.labels);
        self.provenance.extend_from_slice(&other.provenance);
    }

    /// The same pairs with sides `f` and `g` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            dim: self.dim,
            rows_f: self.rows_g.clone(),
            rows_g: self.rows_f.clone(),
            labels: self.labels.clone(),
            provenance: self.provenance.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }
}

/// How non-matching pairs are labelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeLabel {
    /// Uniform in `[0, max]`, drawn per pair.
    Soft { max: f64 },
    /// Exactly 0, for evaluation.
    Hard,
}

/// `size / 2` matching pairs (same vertex on models `a` and `b`, label 1)
/// followed by `size / 2` non-matching pairs (independent distinct
/// vertices, drawn with replacement).
pub fn sample_pairs_between<R: Rng>(
    corpus: &Corpus,
    kind: DescriptorKind,
    a: usize,
    b: usize,
    size: usize,
    negative: NegativeLabel,
    rng: &mut R,
) -> Result<PairBatch> {
    if size == 0 || size % 2 != 0 {
        return Err(Error::InvalidConfig(format!("batch size {size} must be even and positive")));
    }
    let fa = corpus.model(a).descriptor(kind)?;
    let fb = corpus.model(b).descriptor(kind)?;
    let n = corpus.vertex_count();
    if n < 2 {
        return Err(Error::EmptyCorpus);
    }
    let mut batch = PairBatch::empty(fa.dim());
    batch.rows_f.reserve(size * fa.dim());
    batch.rows_g.reserve(size * fa.dim());
    for _ in 0..size / 2 {
        let i = rng.random_range(0..n);
        batch.push(fa.row(i), fb.row(i), 1.0, ((a, i), (b, i)));
    }
    for _ in 0..size / 2 {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let label = match negative {
            NegativeLabel::Soft { max } => rng.random::<f64>() * max,
            NegativeLabel::Hard => 0.0,
        };
        batch.push(fa.row(i), fb.row(j), label, ((a, i), (b, j)));
    }
    Ok(batch)
}

/// Two distinct models drawn uniformly among those with `kind` fields.
pub fn pick_model_pair<R: Rng>(corpus: &Corpus, kind: DescriptorKind, rng: &mut R) -> Result<(usize, usize)> {
    let usable = corpus.models_with(kind);
    if corpus.len() < 2 {
        return Err(Error::EmptyCorpus);
    }
    if usable.len() < 2 {
        let missing = corpus
            .models()
            .iter()
            .find(|m| !m.descriptors.contains_key(&kind))
            .map(|m| m.id())
            .unwrap_or_default();
        return Err(Error::DescriptorMissing {
            model: missing,
            kind: kind.to_string(),
        });
    }
    let a = rng.random_range(0..usable.len());
    let mut b = rng.random_range(0..usable.len() - 1);
    if b >= a {
        b += 1;
    }
    Ok((usable[a], usable[b]))
}

/// One training batch: a random model pair, half matching pairs with label
/// 1 and half non-matching pairs with soft labels in `[0, 0.2]`.
pub fn sample_batch<R: Rng>(
    corpus: &Corpus,
    kind: DescriptorKind,
    size: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    let (a, b) = pick_model_pair(corpus, kind, rng)?;
    sample_pairs_between(
        corpus,
        kind,
        a,
        b,
        size,
        NegativeLabel::Soft { max: SOFT_LABEL_MAX },
        rng,
    )
}

/// Hard-labelled evaluation pairs: `total` pairs in chunks of at most
/// `chunk` (each chunk from its own random model pair).
pub fn sample_labeled_pairs<R: Rng>(
    corpus: &Corpus,
    kind: DescriptorKind,
    total: usize,
    chunk: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    if chunk == 0 || chunk % 2 != 0 {
        return Err(Error::InvalidConfig(format!("chunk size {chunk} must be even and positive")));
    }
    if total == 0 {
        return Err(Error::EmptyTestSet);
    }
    let mut out: Option<PairBatch> = None;
    let mut left = total;
    while left > 0 {
        let size = chunk.min(left + left % 2);
        let (a, b) = pick_model_pair(corpus, kind, rng)?;
        let part = sample_pairs_between(corpus, kind, a, b, size, NegativeLabel::Hard, rng)?;
        match &mut out {
            Some(o) => o.extend(&part),
            None => out = Some(part),
        }
        left = left.saturating_sub(size);
    }
    Ok(out.expect("at least one chunk"))
}
