use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the spectral-descriptor pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },

    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("face {face} repeats vertex {index}")]
    RepeatedVertex { face: usize, index: usize },

    #[error("mesh is not edge-connected: {unreachable} vertices unreachable from vertex {source_vertex}")]
    DisconnectedMesh {
        source_vertex: usize,
        unreachable: usize,
    },

    #[error("vertex index {index} out of range for {vertex_count} vertices")]
    VertexOutOfRange { index: usize, vertex_count: usize },

    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("requested {requested} eigenpairs but the mesh only has {available} vertices")]
    InsufficientVertices { requested: usize, available: usize },

    #[error("eigenvalue {index} is {value:e}, expected a strictly positive value (disconnected mesh?)")]
    ZeroEigenvalue { index: usize, value: f64 },

    #[error("spectrum has {available} eigenpairs, {required} required")]
    SpectrumTooShort { required: usize, available: usize },

    #[error("invalid descriptor schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown {what} `{name}`")]
    UnknownName { what: &'static str, name: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("descriptor kind mismatch: expected {expected}, got {actual}")]
    KindMismatch { expected: String, actual: String },

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus is empty or has fewer than two usable models")]
    EmptyCorpus,

    #[error("model `{model}` has no {kind} descriptors")]
    DescriptorMissing { model: String, kind: String },

    #[error("model `{model}` has {actual} vertices, corpus expects {expected}")]
    VertexCountMismatch {
        model: String,
        expected: usize,
        actual: usize,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("no eligible vertices to sample")]
    EmptySample,

    #[error("bad binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used as the CLI error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::DegenerateFace { .. } => "DegenerateFace",
            Error::IndexOutOfRange { .. } | Error::VertexOutOfRange { .. } => "IndexOutOfRange",
            Error::RepeatedVertex { .. } => "RepeatedVertex",
            Error::DisconnectedMesh { .. } => "DisconnectedMesh",
            Error::ConvergenceFailure(_) => "ConvergenceFailure",
            Error::InsufficientVertices { .. } => "InsufficientVertices",
            Error::ZeroEigenvalue { .. } => "ZeroEigenvalue",
            Error::SpectrumTooShort { .. } => "SpectrumTooShort",
            Error::InvalidSchedule(_) => "InvalidSchedule",
            Error::UnknownName { .. } => "UnknownName",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::KindMismatch { .. } => "KindMismatch",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::DescriptorMissing { .. } => "DescriptorMissing",
            Error::VertexCountMismatch { .. } => "VertexCountMismatch",
            Error::MissingFile(_) => "MissingFile",
            Error::ManifestParse { .. } => "ManifestParseError",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::EmptySample => "EmptySample",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
