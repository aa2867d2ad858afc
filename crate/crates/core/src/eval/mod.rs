//! Nearest-neighbour matching and evaluation statistics.
//!
//! A match is accepted when its embedding distance is within a threshold,
//! and counted correct when it is also within a geodesic tolerance of the
//! ground-truth correspondence on the target mesh.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PairBatch;
use crate::descriptors::{DescriptorField, DescriptorKind, DescriptorParams};
use crate::error::{Error, Result};
use crate::mesh::{shape_diameter_on, EdgeGraph, TriMesh};
use crate::siamese::{loss_from_squared, squared_distance, MlpParams};

/// Fraction of the shape diameter a correct match may be off by.
pub const GEODESIC_TOLERANCE: f64 = 0.05;
/// Fraction of eligible vertices queried in accuracy mode.
pub const SAMPLE_FRACTION: f64 = 0.10;

/// Accept/reject rule on the distance between two embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Compare the Euclidean distance instead of its square.
    pub on_distance: bool,
}

impl Threshold {
    /// Half the loss margin.
    pub fn half_margin(margin: f64, on_distance: bool) -> Self {
        Self {
            value: 0.5 * margin,
            on_distance,
        }
    }

    /// Accepts every pair.
    pub fn unbounded() -> Self {
        Self {
            value: f64::INFINITY,
            on_distance: false,
        }
    }

    pub fn accepts(&self, squared: f64) -> bool {
        if self.on_distance {
            squared.sqrt() <= self.value
        } else {
            squared <= self.value
        }
    }
}

/// Runs every row of `field` through the branch network.
pub fn embed_field(params: &MlpParams, field: &DescriptorField) -> Result<DescriptorField> {
    if field.kind != params.kind {
        return Err(Error::KindMismatch {
            expected: params.kind.to_string(),
            actual: field.kind.to_string(),
        });
    }
    if field.dim() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: field.dim(),
        });
    }
    let values = params.forward_batch(field.values())?;
    DescriptorField::new(
        DescriptorKind::Embedded,
        DescriptorParams::Embedded { source: field.kind },
        field.vertex_count(),
        params.output_dim(),
        values,
    )
}

/// Nearest target row of one source row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub source: usize,
    pub target: usize,
    pub squared_distance: f64,
}

impl Match {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }
}

fn check_dims(source: &DescriptorField, target: &DescriptorField) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            actual: target.dim(),
        });
    }
    Ok(())
}

fn nearest_row(row: &[f64], target: &DescriptorField) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for t in 0..target.vertex_count() {
        let d = squared_distance(row, target.row(t));
        if d < best.1 {
            best = (t, d);
        }
    }
    best
}

/// Exhaustive nearest neighbour in `target` for each listed source vertex;
/// ties go to the lowest target index.
pub fn nearest_neighbors_of(
    source: &DescriptorField,
    target: &DescriptorField,
    queries: &[usize],
) -> Result<Vec<Match>> {
    check_dims(source, target)?;
    if target.vertex_count() == 0 {
        return Err(Error::EmptySample);
    }
    if let Some(&bad) = queries.iter().find(|&&q| q >= source.vertex_count()) {
        return Err(Error::VertexOutOfRange {
            index: bad,
            vertex_count: source.vertex_count(),
        });
    }
    Ok(queries
        .par_iter()
        .map(|&s| {
            let (target, squared_distance) = nearest_row(source.row(s), target);
            Match {
                source: s,
                target,
                squared_distance,
            }
        })
        .collect())
}

/// Nearest neighbour of every source vertex.
pub fn nearest_neighbors(source: &DescriptorField, target: &DescriptorField) -> Result<Vec<Match>> {
    let all: Vec<usize> = (0..source.vertex_count()).collect();
    nearest_neighbors_of(source, target, &all)
}

/// Nearest neighbours that pass `threshold`.
pub fn match_nearest(source: &DescriptorField, target: &DescriptorField, threshold: Threshold) -> Result<Vec<Match>> {
    if !(threshold.value >= 0.0) {
        return Err(Error::InvalidConfig(format!("threshold {} must be non-negative", threshold.value)));
    }
    Ok(nearest_neighbors(source, target)?
        .into_iter()
        .filter(|m| threshold.accepts(m.squared_distance))
        .collect())
}

/// Geodesic acceptance test on one target mesh, reusable across queries.
#[derive(Debug, Clone)]
pub struct GeodesicCheck {
    graph: EdgeGraph,
    diameter: f64,
    limit: f64,
}

impl GeodesicCheck {
    pub fn new(target_mesh: &TriMesh, tolerance_fraction: f64) -> Result<Self> {
        if !(tolerance_fraction >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "geodesic tolerance {tolerance_fraction} must be non-negative"
            )));
        }
        let graph = EdgeGraph::new(target_mesh);
        let diameter = shape_diameter_on(&graph)?;
        Ok(Self {
            graph,
            diameter,
            limit: tolerance_fraction * diameter,
        })
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Largest accepted geodesic distance.
    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Whether `found` lies within the tolerance of `truth`.
    pub fn accepts(&self, found: usize, truth: usize) -> bool {
        self.graph.distance_within(found, truth, self.limit).is_some()
    }
}

fn check_ground_truth(matches: &[Match], ground_truth: &[usize], n_target: usize) -> Result<()> {
    for m in matches {
        let truth = *ground_truth.get(m.source).ok_or(Error::VertexOutOfRange {
            index: m.source,
            vertex_count: ground_truth.len(),
        })?;
        for v in [truth, m.target] {
            if v >= n_target {
                return Err(Error::VertexOutOfRange {
                    index: v,
                    vertex_count: n_target,
                });
            }
        }
    }
    Ok(())
}

/// Matches whose target is within `tolerance_fraction` of the shape
/// diameter (edge-graph geodesic) of `ground_truth[source]`.
pub fn filter_by_geodesic(
    matches: &[Match],
    target_mesh: &TriMesh,
    ground_truth: &[usize],
    tolerance_fraction: f64,
) -> Result<Vec<Match>> {
    check_ground_truth(matches, ground_truth, target_mesh.vertex_count())?;
    let check = GeodesicCheck::new(target_mesh, tolerance_fraction)?;
    let keep: Vec<bool> = matches
        .par_iter()
        .map(|m| check.accepts(m.target, ground_truth[m.source]))
        .collect();
    Ok(matches
        .iter()
        .zip(keep)
        .filter_map(|(m, k)| k.then_some(*m))
        .collect())
}

/// Loss and classification error rates on labelled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Mean contrastive loss.
    pub lss: f64,
    /// Matching pairs classified non-matching, as a fraction of matching pairs.
    pub tnr: f64,
    /// Non-matching pairs classified matching, as a fraction of non-matching pairs.
    pub fpr: f64,
    /// `tnr + fpr`.
    pub err: f64,
}

/// Metrics from precomputed squared distances. Labels above 0.5 count as
/// matching pairs; an empty class contributes a rate of 0.
pub fn metrics_from_squared(
    squared: &[f64],
    labels: &[f64],
    margin: f64,
    threshold: Threshold,
) -> Result<ClassificationMetrics> {
    if squared.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if squared.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: squared.len(),
        });
    }
    let mut loss = 0.0;
    let (mut pos, mut neg, mut rejected_pos, mut accepted_neg) = (0usize, 0usize, 0usize, 0usize);
    for (&d2, &y) in squared.iter().zip(labels) {
        loss += loss_from_squared(d2, y, margin);
        let accepted = threshold.accepts(d2);
        if y > 0.5 {
            pos += 1;
            rejected_pos += usize::from(!accepted);
        } else {
            neg += 1;
            accepted_neg += usize::from(accepted);
        }
    }
    let rate = |k: usize, total: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    let tnr = rate(rejected_pos, pos);
    let fpr = rate(accepted_neg, neg);
    Ok(ClassificationMetrics {
        lss: loss / squared.len() as f64,
        tnr,
        fpr,
        err: tnr + fpr,
    })
}

/// Embeds both sides of every pair and scores them.
pub fn classification_metrics(
    params: &MlpParams,
    pairs: &PairBatch,
    margin: f64,
    threshold: Threshold,
) -> Result<ClassificationMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if pairs.dim != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: pairs.dim,
        });
    }
    let ef = params.forward_batch(&pairs.rows_f)?;
    let eg = params.forward_batch(&pairs.rows_g)?;
    let d = params.output_dim();
    let squared: Vec<f64> = ef
        .chunks(d)
        .zip(eg.chunks(d))
        .map(|(a, b)| squared_distance(a, b))
        .collect();
    metrics_from_squared(&squared, &pairs.labels, margin, threshold)
}

/// The same scores on the descriptors themselves, without a network.
pub fn raw_classification_metrics(pairs: &PairBatch, margin: f64, threshold: Threshold) -> Result<ClassificationMetrics> {
    let squared: Vec<f64> = (0..pairs.len())
        .map(|k| squared_distance(pairs.f(k), pairs.g(k)))
        .collect();
    metrics_from_squared(&squared, &pairs.labels, margin, threshold)
}

/// Which source vertices are queried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum MatchMode {
    /// Every unmasked vertex.
    Count,
    /// `⌊fraction · eligible⌋` unmasked vertices drawn without replacement.
    Accuracy { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
    pub accepted: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub mode: MatchMode,
    pub threshold: Threshold,
    pub geodesic_tolerance: f64,
    pub shape_diameter: f64,
    /// Number of queried source vertices.
    pub queried: usize,
    pub accepted: usize,
    pub correct: usize,
    /// `correct / queried`.
    pub matching_accuracy: f64,
    /// Filled in when labelled pairs were scored as well.
    pub metrics: Option<ClassificationMetrics>,
    pub pairs: Vec<MatchRecord>,
}

impl MatchReport {
    pub fn accepted_pairs(&self) -> impl Iterator<Item = &MatchRecord> {
        self.pairs.iter().filter(|p| p.accepted)
    }

    pub fn correct_pairs(&self) -> impl Iterator<Item = &MatchRecord> {
        self.pairs.iter().filter(|p| p.correct)
    }
}

/// Inputs shared by both matching protocols.
#[derive(Debug, Clone, Copy)]
pub struct MatchSetup<'a> {
    pub source: &'a DescriptorField,
    pub target: &'a DescriptorField,
    pub target_mesh: &'a TriMesh,
    /// True target vertex of each source vertex.
    pub ground_truth: &'a [usize],
    /// `true` excludes a source vertex from evaluation.
    pub mask: Option<&'a [bool]>,
    pub threshold: Threshold,
    pub tolerance_fraction: f64,
}

impl MatchSetup<'_> {
    fn eligible(&self) -> Result<Vec<usize>> {
        let n = self.source.vertex_count();
        if self.ground_truth.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.ground_truth.len(),
            });
        }
        if self.target.vertex_count() != self.target_mesh.vertex_count() {
            return Err(Error::VertexCountMismatch {
                model: "target".into(),
                expected: self.target_mesh.vertex_count(),
                actual: self.target.vertex_count(),
            });
        }
        match self.mask {
            Some(mask) if mask.len() != n => Err(Error::DimensionMismatch {
                expected: n,
                actual: mask.len(),
            }),
            Some(mask) => Ok((0..n).filter(|&v| !mask[v]).collect()),
            None => Ok((0..n).collect()),
        }
    }

    fn report(&self, mode: MatchMode, queries: &[usize]) -> Result<MatchReport> {
        if queries.is_empty() {
            return Err(Error::EmptySample);
        }
        let matches = nearest_neighbors_of(self.source, self.target, queries)?;
        check_ground_truth(&matches, self.ground_truth, self.target_mesh.vertex_count())?;
        let check = GeodesicCheck::new(self.target_mesh, self.tolerance_fraction)?;
        let pairs: Vec<MatchRecord> = matches
            .par_iter()
            .map(|m| {
                let accepted = self.threshold.accepts(m.squared_distance);
                MatchRecord {
                    source: m.source,
                    target: m.target,
                    distance: m.distance(),
                    accepted,
                    correct: accepted && check.accepts(m.target, self.ground_truth[m.source]),
                }
            })
            .collect();
        let accepted = pairs.iter().filter(|p| p.accepted).count();
        let correct = pairs.iter().filter(|p| p.correct).count();
        Ok(MatchReport {
            mode,
            threshold: self.threshold,
            geodesic_tolerance: self.tolerance_fraction,
            shape_diameter: check.diameter(),
            queried: pairs.len(),
            accepted,
            correct,
            matching_accuracy: correct as f64 / pairs.len() as f64,
            metrics: None,
            pairs,
        })
    }
}

/// Matches every unmasked source vertex and counts the surviving matches.
pub fn count_matches(setup: &MatchSetup) -> Result<MatchReport> {
    let queries = setup.eligible()?;
    setup.report(MatchMode::Count, &queries)
}

/// Matches a uniform sample of `⌊fraction · eligible⌋` unmasked source
/// vertices; the accuracy is the fraction of them matched correctly.
pub fn matching_accuracy<R: Rng>(setup: &MatchSetup, fraction: f64, rng: &mut R) -> Result<MatchReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let eligible = setup.eligible()?;
    let count = (fraction * eligible.len() as f64).floor() as usize;
    if count == 0 {
        return Err(Error::EmptySample);
    }
    let mut queries: Vec<usize> = index::sample(rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    queries.sort_unstable();
    setup.report(MatchMode::Accuracy { fraction }, &queries)
}

/// OBJ with both meshes side by side (target shifted along +x) and one
/// line element per correct match.
pub fn visualization_obj(source_mesh: &TriMesh, target_mesh: &TriMesh, report: &MatchReport) -> String {
    let extent = |m: &TriMesh| {
        let xs = m.vertices().iter().map(|p| p.x);
        let lo = xs.clone().fold(f64::INFINITY, f64::min);
        let hi = xs.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (_, src_hi) = extent(source_mesh);
    let (tgt_lo, tgt_hi) = extent(target_mesh);
    let shift = src_hi - tgt_lo + 0.25 * (tgt_hi - tgt_lo);
    let n = source_mesh.vertex_count();

    let mut out = String::new();
    let _ = writeln!(out, "# source vertices 1..={n}, target vertices follow");
    for p in source_mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for p in target_mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", p.x + shift, p.y, p.z);
    }
    for f in source_mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    for f in target_mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + n + 1, f[1] + n + 1, f[2] + n + 1);
    }
    for p in report.correct_pairs() {
        let _ = writeln!(out, "l {} {}", p.source + 1, p.target + n + 1);
    }
    out
}
