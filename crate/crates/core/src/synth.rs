//! Procedural registered corpus: one base shape deformed per subject and
//! per pose, all sharing the base topology.
//!
//! The base is an elongated icosphere with five limb-like protrusions of
//! different lengths, so it has no symmetries. A subject changes limb
//! lengths, scales the body anisotropically and adds smooth local
//! swelling; none of this preserves geodesic distances. A pose twists and
//! bends the body about its long axis, which nearly does.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{primitives, save_obj, TriMesh};

/// `(direction, length, width)` of each protrusion on the unit sphere.
const LIMBS: [([f64; 3], f64, f64); 5] = [
    ([1.0, 0.15, 0.0], 0.9, 0.10),
    ([-1.0, 0.1, 0.3], 0.6, 0.12),
    ([0.2, 1.0, 0.1], 0.5, 0.09),
    ([0.3, -0.9, 0.45], 0.4, 0.11),
    ([-0.3, -0.2, -1.0], 0.35, 0.14),
];

/// Elongation of the body along x.
const BODY_STRETCH: [f64; 3] = [1.5, 1.0, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subdivisions: u32,
    pub subjects: usize,
    pub poses: usize,
    /// Extra subjects with stronger deformations, in every pose.
    pub held_out_subjects: usize,
    pub seed: u64,
    /// Log-normal spread of limb lengths and axis scales for training
    /// subjects.
    pub subject_spread: f64,
    /// The same spread for held-out subjects.
    pub held_out_spread: f64,
    /// Largest bend curvature (radians per unit length along x).
    pub max_bend: f64,
    /// Largest twist rate (radians per unit length along x).
    pub max_twist: f64,
    /// Rescale every subject to the surface area of the base shape, so
    /// subjects differ in proportions rather than overall size.
    pub preserve_area: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subdivisions: 4,
            subjects: 10,
            poses: 5,
            held_out_subjects: 0,
            seed: 0,
            subject_spread: 0.15,
            held_out_spread: 0.3,
            max_bend: 0.3,
            max_twist: 0.3,
            preserve_area: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects + self.held_out_subjects == 0 || self.poses == 0 {
            return Err(Error::InvalidConfig("need at least one subject and one pose".into()));
        }
        if self.subdivisions > 7 {
            return Err(Error::InvalidConfig(format!("{} subdivisions is too many", self.subdivisions)));
        }
        for v in [self.subject_spread, self.held_out_spread, self.max_bend, self.max_twist] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("deformation parameter {v} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Per-subject shape changes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectParams {
    pub limb_scale: [f64; 5],
    pub axis_scale: [f64; 3],
    /// `(direction, relative swelling)` of smooth local radius changes.
    pub swellings: Vec<(Vector3<f64>, f64)>,
    /// Uniform scale applied last, before articulation.
    pub size: f64,
}

impl SubjectParams {
    pub fn identity() -> Self {
        Self {
            limb_scale: [1.0; 5],
            axis_scale: [1.0; 3],
            swellings: Vec::new(),
            size: 1.0,
        }
    }

    fn random<R: Rng>(spread: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, spread).expect("finite spread");
        let mut lognormal = || normal.sample(rng).exp();
        let limb_scale = std::array::from_fn(|_| lognormal());
        let axis_scale = std::array::from_fn(|_| lognormal());
        let swellings = (0..3)
            .map(|_| {
                let dir = random_direction(rng);
                (dir, rng.random_range(-1.0..1.0) * spread)
            })
            .collect();
        Self {
            limb_scale,
            axis_scale,
            swellings,
            size: 1.0,
        }
    }
}

/// Per-pose articulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    pub bend: f64,
    pub twist: f64,
}

impl PoseParams {
    pub fn rest() -> Self {
        Self { bend: 0.0, twist: 0.0 }
    }
}

fn random_direction<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// The base shape deformed by `subject` and then `pose`.
pub fn deformed_shape(subdivisions: u32, subject: &SubjectParams, pose: &PoseParams) -> Result<TriMesh> {
    let limbs: Vec<(Vector3<f64>, f64, f64)> = LIMBS
        .iter()
        .zip(subject.limb_scale)
        .map(|((d, len, w), s)| (Vector3::from(*d).normalize(), len * s, *w))
        .collect();
    let scale = Vector3::from(BODY_STRETCH).component_mul(&Vector3::from(subject.axis_scale)) * subject.size;
    primitives::icosphere(subdivisions).map_vertices(|p| {
        let u = p.coords;
        let mut r = 1.0;
        for (dir, len, width) in &limbs {
            r += len * (-(1.0 - u.dot(dir)) / width).exp();
        }
        for (dir, amount) in &subject.swellings {
            r *= 1.0 + amount * (-(1.0 - u.dot(dir)) / 0.5).exp();
        }
        Point3::from(articulate((u * r).component_mul(&scale), pose))
    })
}

/// Twist about the x axis, then bend the x axis into a circular arc in the
/// xy plane; both rates are per unit length along x.
fn articulate(p: Vector3<f64>, pose: &PoseParams) -> Vector3<f64> {
    let (s, c) = (pose.twist * p.x).sin_cos();
    let (x, y, z) = (p.x, c * p.y - s * p.z, s * p.y + c * p.z);
    if pose.bend.abs() < 1e-12 {
        return Vector3::new(x, y, z);
    }
    let radius = 1.0 / pose.bend;
    let (s, c) = (x * pose.bend).sin_cos();
    Vector3::new((radius - y) * s, radius - (radius - y) * c, z)
}

/// Vertices where some limb adds at least `fraction` to the unit body
/// radius, on a mesh of `subdivisions`.
pub fn protrusion_vertices(subdivisions: u32, fraction: f64) -> Vec<usize> {
    let sphere = primitives::icosphere(subdivisions);
    (0..sphere.vertex_count())
        .filter(|&v| {
            let u = sphere.vertex(v).coords;
            LIMBS.iter().any(|(d, len, width)| {
                len * (-(1.0 - u.dot(&Vector3::from(*d).normalize())) / width).exp() >= fraction
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthModel {
    pub subject: String,
    pub pose: String,
    pub held_out: bool,
    pub mesh: TriMesh,
}

/// Subject ids are `s0, s1, …` for training subjects and `h0, h1, …` for
/// held-out ones; pose ids are `p0, p1, …`. Pose `p0` is the rest pose
/// and every subject uses the same articulation per pose id.
pub fn generate(config: &SynthConfig) -> Result<Vec<SynthModel>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let poses: Vec<PoseParams> = (0..config.poses)
        .map(|p| {
            let bend = rng.random_range(-1.0..1.0) * config.max_bend;
            let twist = rng.random_range(-1.0..1.0) * config.max_twist;
            if p == 0 {
                PoseParams::rest()
            } else {
                PoseParams { bend, twist }
            }
        })
        .collect();
    let mut subjects: Vec<(String, bool, SubjectParams)> = Vec::new();
    for s in 0..config.subjects {
        subjects.push((format!("s{s}"), false, SubjectParams::random(config.subject_spread, &mut rng)));
    }
    for s in 0..config.held_out_subjects {
        subjects.push((format!("h{s}"), true, SubjectParams::random(config.held_out_spread, &mut rng)));
    }
    if config.preserve_area {
        let base = deformed_shape(config.subdivisions, &SubjectParams::identity(), &PoseParams::rest())?.surface_area();
        for (_, _, params) in &mut subjects {
            let area = deformed_shape(config.subdivisions, params, &PoseParams::rest())?.surface_area();
            params.size = (base / area).sqrt();
        }
    }
    let mut out = Vec::with_capacity(subjects.len() * poses.len());
    for (name, held_out, params) in &subjects {
        for (p, pose) in poses.iter().enumerate() {
            out.push(SynthModel {
                subject: name.clone(),
                pose: format!("p{p}"),
                held_out: *held_out,
                mesh: deformed_shape(config.subdivisions, params, pose)?,
            });
        }
    }
    Ok(out)
}

/// File names written by [`write_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    /// Every model.
    pub manifest: PathBuf,
    /// Training subjects only.
    pub train_manifest: PathBuf,
    /// Held-out subjects only.
    pub held_out_manifest: PathBuf,
}

/// Writes `meshes/<subject>_<pose>.obj` under `dir` plus three manifests
/// with paths relative to `dir`.
pub fn write_corpus(dir: &Path, models: &[SynthModel]) -> Result<CorpusFiles> {
    let mesh_dir = dir.join("meshes");
    std::fs::create_dir_all(&mesh_dir)?;
    let mut all = String::from("# path subject pose\n");
    let mut train = all.clone();
    let mut held = all.clone();
    for m in models {
        let rel = format!("meshes/{}_{}.obj", m.subject, m.pose);
        save_obj(&m.mesh, &dir.join(&rel))?;
        let line = format!("{rel} {} {}\n", m.subject, m.pose);
        all.push_str(&line);
        if m.held_out {
            held.push_str(&line);
        } else {
            train.push_str(&line);
        }
    }
    let files = CorpusFiles {
        manifest: dir.join("manifest.txt"),
        train_manifest: dir.join("train.txt"),
        held_out_manifest: dir.join("held_out.txt"),
    };
    std::fs::write(&files.manifest, all)?;
    std::fs::write(&files.train_manifest, train)?;
    std::fs::write(&files.held_out_manifest, held)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_corpus;

    fn small() -> SynthConfig {
        SynthConfig {
            subdivisions: 2,
            subjects: 6,
            poses: 5,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn counts_and_shared_topology() {
        let models = generate(&small()).unwrap();
        assert_eq!(models.len(), 30);
        let faces = models[0].mesh.faces();
        assert!(models.iter().all(|m| m.mesh.faces() == faces && m.mesh.vertex_count() == 162));
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_corpus(dir_a.path(), &generate(&small()).unwrap()).unwrap();
        write_corpus(dir_b.path(), &generate(&small()).unwrap()).unwrap();
        for name in ["manifest.txt", "meshes/s3_p2.obj", "meshes/s0_p0.obj"] {
            assert_eq!(
                std::fs::read(dir_a.path().join(name)).unwrap(),
                std::fs::read(dir_b.path().join(name)).unwrap()
            );
        }
        let other = generate(&SynthConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(other[7].mesh.vertices(), generate(&small()).unwrap()[7].mesh.vertices());
    }

    #[test]
    fn manifests_load() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            subjects: 2,
            poses: 2,
            held_out_subjects: 1,
            ..small()
        };
        let files = write_corpus(dir.path(), &generate(&config).unwrap()).unwrap();
        assert_eq!(build_corpus(dir.path(), &files.manifest, None).unwrap().len(), 6);
        assert_eq!(build_corpus(dir.path(), &files.train_manifest, None).unwrap().len(), 4);
        let held = build_corpus(dir.path(), &files.held_out_manifest, None).unwrap();
        assert!(held.models().iter().all(|m| m.subject == "h0"));
    }

    #[test]
    fn twist_and_bend_keep_edge_lengths_near_axis() {
        // a thin rod along x: articulation is close to an isometry
        let rod = primitives::cylinder(0.02, 2.0, 12, 40)
            .map_vertices(|p| Point3::new(p.z - 1.0, p.x, p.y))
            .unwrap();
        let pose = PoseParams { bend: 0.5, twist: 0.6 };
        let moved = rod.map_vertices(|p| Point3::from(articulate(p.coords, &pose))).unwrap();
        for f in rod.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let before = (rod.vertex(a) - rod.vertex(b)).norm();
                let after = (moved.vertex(a) - moved.vertex(b)).norm();
                assert!((after / before - 1.0).abs() < 0.02, "{before} → {after}");
            }
        }
    }

    #[test]
    fn subjects_share_rest_area() {
        let config = small();
        let models = generate(&config).unwrap();
        let base = deformed_shape(2, &SubjectParams::identity(), &PoseParams::rest()).unwrap().surface_area();
        for m in models.iter().filter(|m| m.pose == "p0") {
            assert!((m.mesh.surface_area() / base - 1.0).abs() < 1e-12);
        }
        let free = generate(&SynthConfig { preserve_area: false, ..config }).unwrap();
        assert!(free.iter().any(|m| (m.mesh.surface_area() / base - 1.0).abs() > 0.05));
    }

    #[test]
    fn rest_pose_of_identity_subject_is_base() {
        let base = deformed_shape(2, &SubjectParams::identity(), &PoseParams::rest()).unwrap();
        let again = deformed_shape(2, &SubjectParams::identity(), &PoseParams::rest()).unwrap();
        assert_eq!(base.vertices(), again.vertices());
        let xs: Vec<f64> = base.vertices().iter().map(|p| p.x).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(span > 3.0);
    }
}
